// SPDX-License-Identifier: Apache-2.0
//
// Scenario configuration and the key=value text format.
//
// Grammar (one entry per line):
//   line    := blank | comment | entry
//   comment := '#' anything
//   entry   := key '=' value [ '#' anything ]
//   key     := [A-Za-z_][A-Za-z0-9_]*
//   value   := any text, surrounding blanks trimmed; lists are comma separated
// Power fields carry a _dbm suffix and are converted to linear mW on load.

#pragma once

#include "gfra/numerics.hpp"

#include <cctype>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfra
{

class ConfigError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

struct SystemConfig
{
    int n_users = 400;        // N
    int n_active = 40;        // K
    int n_antennas = 60;      // M
    int pilot_len = 60;       // L
    int block_len = 210;      // T
    int payload_bits = 50;    // c
    int n_blocks = 2;         // J
    double beta = dbm_to_linear(-109.0);
    double sigma2 = dbm_to_linear(-109.0);
    std::uint64_t master_seed = 1;
    int se_samples = 20000;
    double binom_tail_tol = 1e-12;

    int data_len() const { return block_len - pilot_len; }
    double rate() const { return static_cast<double>(payload_bits) / data_len(); }
    double lambda() const { return static_cast<double>(n_active) / n_users; }

    void validate() const
    {
        auto fail = [](const std::string& m) { throw ConfigError("invalid configuration: " + m); };
        if (n_users < 1)
            fail("n_users must be >= 1");
        if (n_active < 0 || n_active > n_users)
            fail("need 0 <= n_active <= n_users");
        if (n_antennas < n_active)
            fail("need n_antennas >= n_active");
        if (pilot_len < 1 || pilot_len >= block_len)
            fail("need 1 <= pilot_len < block_len");
        if (payload_bits < 1)
            fail("payload_bits must be >= 1");
        if (n_blocks < 1)
            fail("n_blocks must be >= 1");
        if (!(beta > 0.0) || !(sigma2 > 0.0))
            fail("beta and sigma2 must be positive");
        if (se_samples < 100)
            fail("se_samples must be >= 100");
        if (!(binom_tail_tol > 0.0 && binom_tail_tol < 1e-3))
            fail("binom_tail_tol must lie in (0, 1e-3)");
    }
};

/// Parsed key=value file; remembers source lines for diagnostics and which keys were read.
class KeyValueFile
{
  public:
    struct Entry
    {
        std::string value;
        int line = 0;
    };

    static KeyValueFile parse(std::istream& in, const std::string& source = "<input>")
    {
        KeyValueFile kv;
        kv.source_ = source;
        std::string raw;
        int line_no = 0;
        while (std::getline(in, raw))
        {
            ++line_no;
            kv.text_ += raw;
            kv.text_ += '\n';
            auto hash = raw.find('#');
            std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
            if (line.empty())
                continue;
            auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
            std::string key = trim(line.substr(0, eq));
            std::string value = trim(line.substr(eq + 1));
            if (!valid_key(key))
                throw ConfigError(source + ":" + std::to_string(line_no) + ": invalid key '" + key + "'");
            if (kv.entries_.count(key))
                throw ConfigError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key +
                                  "' (first at line " + std::to_string(kv.entries_[key].line) + ")");
            kv.entries_[key] = {value, line_no};
        }
        return kv;
    }

    static KeyValueFile load(const std::string& path)
    {
        std::ifstream f(path);
        if (!f)
            throw ConfigError("cannot open config file '" + path + "'");
        return parse(f, path);
    }

    static KeyValueFile from_string(const std::string& text)
    {
        std::istringstream s(text);
        return parse(s);
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }
    const std::string& text() const { return text_; }
    const std::string& source() const { return source_; }

    void set(const std::string& key, const std::string& value) { entries_[key] = {value, 0}; }

    std::optional<std::string> get_string(const std::string& key) const
    {
        auto it = entries_.find(key);
        if (it == entries_.end())
            return std::nullopt;
        used_[key] = true;
        return it->second.value;
    }

    template <class T>
    std::optional<T> get(const std::string& key) const
    {
        auto s = get_string(key);
        if (!s)
            return std::nullopt;
        return convert<T>(key, *s);
    }

    template <class T>
    std::optional<std::vector<T>> get_list(const std::string& key) const
    {
        auto s = get_string(key);
        if (!s)
            return std::nullopt;
        std::vector<T> out;
        std::stringstream ss(*s);
        std::string item;
        while (std::getline(ss, item, ','))
        {
            item = trim(item);
            if (item.empty())
                throw error(key, "empty list element");
            out.push_back(convert<T>(key, item));
        }
        if (out.empty())
            throw error(key, "empty list");
        return out;
    }

    /// Keys present in the file but never read.
    std::vector<std::string> unused_keys() const
    {
        std::vector<std::string> out;
        for (const auto& [k, e] : entries_)
            if (!used_.count(k))
                out.push_back(k);
        return out;
    }

    ConfigError error(const std::string& key, const std::string& what) const
    {
        auto it = entries_.find(key);
        std::string where = source_;
        if (it != entries_.end() && it->second.line > 0)
            where += ":" + std::to_string(it->second.line);
        return ConfigError(where + ": field '" + key + "': " + what);
    }

    static std::string trim(const std::string& s)
    {
        auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos)
            return {};
        auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

  private:
    static bool valid_key(const std::string& k)
    {
        if (k.empty() || !(std::isalpha(static_cast<unsigned char>(k[0])) || k[0] == '_'))
            return false;
        for (char ch : k)
            if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'))
                return false;
        return true;
    }

    template <class T>
    T convert(const std::string& key, const std::string& s) const
    {
        if constexpr (std::is_same_v<T, std::string>)
        {
            return s;
        }
        else if constexpr (std::is_same_v<T, bool>)
        {
            if (s == "true" || s == "1" || s == "yes")
                return true;
            if (s == "false" || s == "0" || s == "no")
                return false;
            throw error(key, "expected boolean, got '" + s + "'");
        }
        else if constexpr (std::is_floating_point_v<T>)
        {
            try
            {
                std::size_t pos = 0;
                double v = std::stod(s, &pos);
                if (pos != s.size())
                    throw std::invalid_argument("trailing");
                return static_cast<T>(v);
            }
            catch (const std::exception&)
            {
                throw error(key, "expected number, got '" + s + "'");
            }
        }
        else
        {
            T v{};
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc() || p != s.data() + s.size())
                throw error(key, "expected integer, got '" + s + "'");
            return v;
        }
    }

    std::map<std::string, Entry> entries_;
    mutable std::map<std::string, bool> used_;
    std::string source_;
    std::string text_;
};

/// Overlay any SystemConfig fields present in kv onto base.
inline SystemConfig apply_system_fields(SystemConfig cfg, const KeyValueFile& kv)
{
    if (auto v = kv.get<int>("n_users"))
        cfg.n_users = *v;
    if (auto v = kv.get<int>("n_active"))
        cfg.n_active = *v;
    if (auto v = kv.get<int>("n_antennas"))
        cfg.n_antennas = *v;
    if (auto v = kv.get<int>("pilot_len"))
        cfg.pilot_len = *v;
    if (auto v = kv.get<int>("block_len"))
        cfg.block_len = *v;
    if (auto v = kv.get<int>("payload_bits"))
        cfg.payload_bits = *v;
    if (auto v = kv.get<int>("n_blocks"))
        cfg.n_blocks = *v;
    if (auto v = kv.get<double>("beta_dbm"))
        cfg.beta = dbm_to_linear(*v);
    if (auto v = kv.get<double>("sigma2_dbm"))
        cfg.sigma2 = dbm_to_linear(*v);
    if (auto v = kv.get<std::uint64_t>("master_seed"))
        cfg.master_seed = *v;
    if (auto v = kv.get<int>("se_samples"))
        cfg.se_samples = *v;
    if (auto v = kv.get<double>("binom_tail_tol"))
        cfg.binom_tail_tol = *v;
    return cfg;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(const std::string& s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s)
    {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace gfra

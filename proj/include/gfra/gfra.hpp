// SPDX-License-Identifier: Apache-2.0
//
// Umbrella header.

#pragma once

#include "gfra/numerics.hpp"
#include "gfra/rng.hpp"
#include "gfra/config.hpp"
#include "gfra/system_model.hpp"
#include "gfra/denoiser.hpp"
#include "gfra/state_evolution.hpp"
#include "gfra/amp.hpp"
#include "gfra/corr_amp.hpp"
#include "gfra/link_layer.hpp"
#include "gfra/analysis.hpp"
#include "gfra/harness.hpp"

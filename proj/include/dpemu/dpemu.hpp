// SPDX-License-Identifier: Apache-2.0
//
// dpemu: direct-path RF channel emulation library
// ------------------------------------------------------------------------
//
// Everything in one include.

#pragma once

#include "dpemu/analysis.hpp"
#include "dpemu/core.hpp"
#include "dpemu/engine.hpp"
#include "dpemu/experiments.hpp"
#include "dpemu/fdelay.hpp"
#include "dpemu/geom.hpp"
#include "dpemu/io/json_io.hpp"
#include "dpemu/opcount.hpp"
#include "dpemu/random_scenario.hpp"
#include "dpemu/scatter.hpp"
#include "dpemu/scenario.hpp"
#include "dpemu/sphharm.hpp"
#include "dpemu/stream_io.hpp"
#include "dpemu/waveform.hpp"

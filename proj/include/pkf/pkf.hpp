#pragma once

// Umbrella header for the converted-measurement precision Kalman filter
// library: coordinate maps, cubature rules, measurement conversion, the
// filters, the Monte Carlo simulation harness and its metrics.

#include "pkf/common.hpp"
#include "pkf/convert.hpp"
#include "pkf/coordmap.hpp"
#include "pkf/experiment.hpp"
#include "pkf/filters.hpp"
#include "pkf/metrics.hpp"
#include "pkf/rng.hpp"
#include "pkf/sigma.hpp"
#include "pkf/sim.hpp"

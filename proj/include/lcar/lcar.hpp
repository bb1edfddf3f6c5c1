#pragma once

// Bayesian spatial regression for areal count data with a random
// neighbourhood structure, plus the intrinsic and convolution comparators,
// data-driven candidate elicitation, MCMC fitting, diagnostics and the
// simulation harness.

#define LCAR_VERSION "0.1.0"

#include "lcar/adjacency.hpp"
#include "lcar/diagnostics.hpp"
#include "lcar/elicitation.hpp"
#include "lcar/errors.hpp"
#include "lcar/io.hpp"
#include "lcar/model.hpp"
#include "lcar/precision.hpp"
#include "lcar/rng.hpp"
#include "lcar/sampler.hpp"
#include "lcar/simulation.hpp"
#include "lcar/util.hpp"

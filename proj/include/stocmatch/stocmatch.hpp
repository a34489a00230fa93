#pragma once

// Umbrella header for the stochastic contract-matching solver library.

#include "stocmatch/clustering.hpp"
#include "stocmatch/errors.hpp"
#include "stocmatch/experiment.hpp"
#include "stocmatch/greedy.hpp"
#include "stocmatch/lp.hpp"
#include "stocmatch/model.hpp"
#include "stocmatch/recourse.hpp"
#include "stocmatch/rng.hpp"

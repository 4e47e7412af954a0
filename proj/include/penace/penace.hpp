#pragma once

#include "penace/csv.hpp"
#include "penace/dgp.hpp"
#include "penace/diagnostics.hpp"
#include "penace/estimators.hpp"
#include "penace/population.hpp"
#include "penace/rng.hpp"
#include "penace/simulation.hpp"
#include "penace/solvers.hpp"

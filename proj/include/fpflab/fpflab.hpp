#pragma once

#include "fpflab/error.hpp"
#include "fpflab/density.hpp"
#include "fpflab/observation.hpp"
#include "fpflab/random.hpp"
#include "fpflab/simulation.hpp"
#include "fpflab/poisson.hpp"
#include "fpflab/variational.hpp"
#include "fpflab/kushner.hpp"
#include "fpflab/fpf.hpp"
#include "fpflab/metrics.hpp"
#include "fpflab/scenario.hpp"
#include "fpflab/experiment.hpp"

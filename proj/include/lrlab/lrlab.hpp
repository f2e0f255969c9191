// Umbrella header for the whole library.
#pragma once

#include "lrlab/bounds.hpp"
#include "lrlab/core.hpp"
#include "lrlab/dynamics.hpp"
#include "lrlab/experiment.hpp"
#include "lrlab/geometry.hpp"
#include "lrlab/interactions.hpp"
#include "lrlab/observables.hpp"
#include "lrlab/propagator.hpp"

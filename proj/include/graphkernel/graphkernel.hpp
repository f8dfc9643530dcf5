#pragma once

#include "graphkernel/dynamic.hpp"
#include "graphkernel/errors.hpp"
#include "graphkernel/estimators.hpp"
#include "graphkernel/experiment.hpp"
#include "graphkernel/graph.hpp"
#include "graphkernel/harness.hpp"
#include "graphkernel/kernels.hpp"
#include "graphkernel/kriged.hpp"
#include "graphkernel/linalg.hpp"
#include "graphkernel/mkl.hpp"
#include "graphkernel/observation.hpp"
#include "graphkernel/rng.hpp"

#pragma once

#include "lookup3d/bspline.hpp"
#include "lookup3d/calibration.hpp"
#include "lookup3d/config.hpp"
#include "lookup3d/core.hpp"
#include "lookup3d/evaluation.hpp"
#include "lookup3d/geometry.hpp"
#include "lookup3d/parallel.hpp"
#include "lookup3d/patterns.hpp"
#include "lookup3d/persistence.hpp"
#include "lookup3d/pipeline.hpp"
#include "lookup3d/reconstruction.hpp"
#include "lookup3d/simulator.hpp"

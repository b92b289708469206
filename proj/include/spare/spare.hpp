#pragma once

#include "spare/core.hpp"
#include "spare/spatial_index.hpp"
#include "spare/surface.hpp"
#include "spare/geodesic.hpp"
#include "spare/normalize.hpp"
#include "spare/rotation.hpp"
#include "spare/energy.hpp"
#include "spare/variants.hpp"
#include "spare/linear_solver.hpp"
#include "spare/fine_solver.hpp"
#include "spare/deformation_graph.hpp"
#include "spare/coarse_solver.hpp"
#include "spare/evaluation.hpp"
#include "spare/mesh_io.hpp"
#include "spare/config.hpp"
#include "spare/scenario.hpp"
#include "spare/pipeline.hpp"

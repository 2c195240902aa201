#pragma once

#include "qapm/assign.hpp"
#include "qapm/baselines.hpp"
#include "qapm/checkpoint.hpp"
#include "qapm/dataset.hpp"
#include "qapm/diffcore.hpp"
#include "qapm/gnn.hpp"
#include "qapm/graph.hpp"
#include "qapm/harness.hpp"
#include "qapm/landscape.hpp"
#include "qapm/match.hpp"
#include "qapm/operators.hpp"
#include "qapm/optim.hpp"

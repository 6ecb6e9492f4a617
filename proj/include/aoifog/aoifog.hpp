#pragma once

#include "aoi.hpp"
#include "distribution.hpp"
#include "dqn.hpp"
#include "error.hpp"
#include "fleet.hpp"
#include "mlp.hpp"
#include "route_mdp.hpp"
#include "segmentation.hpp"
#include "tabular.hpp"
#include "trace.hpp"

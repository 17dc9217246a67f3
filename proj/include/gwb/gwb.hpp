#pragma once

#include "gwb/grid.hpp"
#include "gwb/discrete_sets.hpp"
#include "gwb/linalg.hpp"
#include "gwb/series_bounds.hpp"
#include "gwb/localization.hpp"
#include "gwb/roe_ops.hpp"
#include "gwb/models.hpp"
#include "gwb/config.hpp"
#include "gwb/experiments.hpp"

#pragma once

#include "socialgrid/baselines.hpp"
#include "socialgrid/checkpoint.hpp"
#include "socialgrid/config.hpp"
#include "socialgrid/eval.hpp"
#include "socialgrid/events.hpp"
#include "socialgrid/forecast.hpp"
#include "socialgrid/grid.hpp"
#include "socialgrid/grid_io.hpp"
#include "socialgrid/models.hpp"
#include "socialgrid/ops.hpp"
#include "socialgrid/pipeline.hpp"
#include "socialgrid/predictor.hpp"
#include "socialgrid/random.hpp"
#include "socialgrid/tcn.hpp"
#include "socialgrid/tensor.hpp"

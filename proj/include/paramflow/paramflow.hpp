#pragma once

#include "paramflow/common.hpp"
#include "paramflow/discrepancy.hpp"
#include "paramflow/flow.hpp"
#include "paramflow/generator.hpp"
#include "paramflow/io.hpp"
#include "paramflow/operators.hpp"
#include "paramflow/rkhs.hpp"
#include "paramflow/targets.hpp"
#include "paramflow/trainer.hpp"

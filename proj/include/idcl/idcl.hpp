#pragma once

#include "idcl/analysis.hpp"
#include "idcl/checkpoint.hpp"
#include "idcl/coding_rate.hpp"
#include "idcl/config.hpp"
#include "idcl/contrastive.hpp"
#include "idcl/data.hpp"
#include "idcl/disentangler.hpp"
#include "idcl/encoder.hpp"
#include "idcl/evaluator.hpp"
#include "idcl/experiment.hpp"
#include "idcl/model.hpp"
#include "idcl/optim.hpp"
#include "idcl/ranking.hpp"
#include "idcl/trainer.hpp"

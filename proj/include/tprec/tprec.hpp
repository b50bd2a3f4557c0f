#pragma once

#include "tprec/analysis.hpp"
#include "tprec/cells.hpp"
#include "tprec/checkpoint.hpp"
#include "tprec/data.hpp"
#include "tprec/degree.hpp"
#include "tprec/errors.hpp"
#include "tprec/experiment.hpp"
#include "tprec/linalg.hpp"
#include "tprec/model.hpp"
#include "tprec/optim.hpp"
#include "tprec/seq2seq.hpp"
#include "tprec/spectral_norm.hpp"
#include "tprec/stability.hpp"
#include "tprec/tensor.hpp"
#include "tprec/train.hpp"

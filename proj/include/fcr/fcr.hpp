#pragma once

#include "fcr/core/error.hpp"
#include "fcr/core/exact_sum.hpp"
#include "fcr/core/format.hpp"
#include "fcr/core/hash.hpp"
#include "fcr/core/rng.hpp"
#include "fcr/core/tensor.hpp"
#include "fcr/nn/backward.hpp"
#include "fcr/nn/checkpoint.hpp"
#include "fcr/nn/edit.hpp"
#include "fcr/nn/features.hpp"
#include "fcr/nn/model.hpp"
#include "fcr/nn/train.hpp"
#include "fcr/data/dataset.hpp"
#include "fcr/data/idx.hpp"
#include "fcr/attribution/accumulate.hpp"
#include "fcr/attribution/oracle.hpp"
#include "fcr/attribution/scores.hpp"
#include "fcr/attribution/theory.hpp"
#include "fcr/editor/audit.hpp"
#include "fcr/editor/orthogonalize.hpp"
#include "fcr/editor/removal.hpp"
#include "fcr/editor/search.hpp"
#include "fcr/eval/evaluate.hpp"
#include "fcr/eval/report.hpp"
#include "fcr/eval/sweep.hpp"

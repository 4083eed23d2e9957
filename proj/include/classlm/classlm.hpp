#pragma once

#include "classlm/common.hpp"
#include "classlm/text_corpus.hpp"
#include "classlm/discounting.hpp"
#include "classlm/backoff_bigram.hpp"
#include "classlm/class_bigram.hpp"
#include "classlm/criterion.hpp"
#include "classlm/exchange.hpp"
#include "classlm/evaluation.hpp"

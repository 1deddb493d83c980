#pragma once

#include "hnclass/baseline.hpp"
#include "hnclass/checkpoint.hpp"
#include "hnclass/classes.hpp"
#include "hnclass/config.hpp"
#include "hnclass/datagen.hpp"
#include "hnclass/error.hpp"
#include "hnclass/eval.hpp"
#include "hnclass/model.hpp"
#include "hnclass/pretokenize.hpp"
#include "hnclass/rng.hpp"
#include "hnclass/tensor.hpp"
#include "hnclass/train.hpp"
#include "hnclass/vocab.hpp"

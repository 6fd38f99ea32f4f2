#pragma once

#include "picard/checkpoint.hpp"
#include "picard/error.hpp"
#include "picard/evaluation.hpp"
#include "picard/heatmap.hpp"
#include "picard/image_io.hpp"
#include "picard/inpaint.hpp"
#include "picard/model.hpp"
#include "picard/ops.hpp"
#include "picard/random.hpp"
#include "picard/samplers.hpp"
#include "picard/scoring.hpp"
#include "picard/synthdata.hpp"
#include "picard/tensor.hpp"
#include "picard/theory.hpp"
#include "picard/train.hpp"
#include "picard/pipeline.hpp"

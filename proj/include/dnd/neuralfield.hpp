#pragma once

#include "dnd/neuralfield/activation.hpp"
#include "dnd/neuralfield/mlp.hpp"
#include "dnd/neuralfield/model_json.hpp"
#include "dnd/neuralfield/training.hpp"

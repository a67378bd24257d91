#pragma once

#include "dnd/certkit.hpp"
#include "dnd/digest.hpp"
#include "dnd/errors.hpp"
#include "dnd/matkit.hpp"
#include "dnd/neuralfield.hpp"
#include "dnd/perturbkit.hpp"
#include "dnd/pipeline.hpp"
#include "dnd/simkit.hpp"

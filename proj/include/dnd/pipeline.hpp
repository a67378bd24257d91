#pragma once

#include "dnd/pipeline/compare.hpp"
#include "dnd/pipeline/config.hpp"
#include "dnd/pipeline/run.hpp"

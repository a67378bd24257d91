#pragma once

#include "dnd/simkit/dataset.hpp"
#include "dnd/simkit/duffing.hpp"
#include "dnd/simkit/integrate.hpp"
#include "dnd/simkit/trajectory_csv.hpp"

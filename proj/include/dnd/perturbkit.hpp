#pragma once

#include "dnd/perturbkit/perturb.hpp"

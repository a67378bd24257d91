#pragma once

#include "dnd/matkit/blocks.hpp"
#include "dnd/matkit/dense_matrix.hpp"
#include "dnd/matkit/sym_eig.hpp"

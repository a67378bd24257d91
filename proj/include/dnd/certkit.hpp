#pragma once

#include "dnd/certkit/assembly.hpp"
#include "dnd/certkit/certificate_json.hpp"
#include "dnd/certkit/qsr.hpp"
#include "dnd/certkit/search.hpp"
#include "dnd/certkit/slope.hpp"

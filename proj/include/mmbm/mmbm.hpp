#pragma once

#include "types.hpp"
#include "linalg.hpp"
#include "model.hpp"
#include "quadratic.hpp"
#include "passage.hpp"
#include "sojourn.hpp"
#include "flexible.hpp"
#include "fluid.hpp"
#include "simulate.hpp"
#include "serialize.hpp"

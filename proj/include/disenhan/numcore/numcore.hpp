#pragma once

#include "disenhan/numcore/grad_check.hpp"
#include "disenhan/numcore/ops.hpp"
#include "disenhan/numcore/tape.hpp"
#include "disenhan/numcore/tensor.hpp"

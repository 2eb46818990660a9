#pragma once

#include "gexpect/engine.hpp"
#include "gexpect/errors.hpp"
#include "gexpect/expr.hpp"
#include "gexpect/gnormal.hpp"
#include "gexpect/io.hpp"
#include "gexpect/linalg.hpp"
#include "gexpect/path_ops.hpp"
#include "gexpect/quadrature.hpp"
#include "gexpect/sublinear.hpp"
#include "gexpect/value_function.hpp"

#pragma once

// 113-bit significand scalar used only as a finite-difference reference.
#include <boost/multiprecision/eigen.hpp>
#include <boost/multiprecision/float128.hpp>

namespace tmtsc {

using Quad = boost::multiprecision::float128;

}  // namespace tmtsc

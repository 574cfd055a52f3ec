#pragma once

// libtorch's c10 logging defines glog-style CHECK macros that clash with
// doctest's; include torch first and hand the names to doctest.
#include <torch/torch.h>

#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LE
#undef CHECK_LT
#undef CHECK_GE
#undef CHECK_GT
#undef CHECK_NOTNULL

#include "doctest.h"

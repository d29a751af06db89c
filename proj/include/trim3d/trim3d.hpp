#pragma once

#include "trim3d/error.hpp"
#include "trim3d/tensor.hpp"
#include "trim3d/workload.hpp"
#include "trim3d/golden.hpp"
#include "trim3d/memory.hpp"
#include "trim3d/slice.hpp"
#include "trim3d/recycling_buffer.hpp"
#include "trim3d/trace.hpp"
#include "trim3d/array.hpp"
#include "trim3d/analytics.hpp"
#include "trim3d/tensor_io.hpp"
#include "trim3d/report.hpp"

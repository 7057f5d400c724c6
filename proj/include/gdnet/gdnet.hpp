#pragma once

#include "gdnet/analysis.hpp"
#include "gdnet/data.hpp"
#include "gdnet/gradcheck.hpp"
#include "gdnet/layer.hpp"
#include "gdnet/metrics.hpp"
#include "gdnet/network.hpp"
#include "gdnet/reports.hpp"
#include "gdnet/tensor.hpp"
#include "gdnet/train.hpp"

#pragma once

#include "paano/checkpoint.hpp"
#include "paano/config.hpp"
#include "paano/detector.hpp"
#include "paano/error.hpp"
#include "paano/kernels.hpp"
#include "paano/memory_bank.hpp"
#include "paano/metrics.hpp"
#include "paano/model.hpp"
#include "paano/optim.hpp"
#include "paano/patching.hpp"
#include "paano/plot.hpp"
#include "paano/series_io.hpp"
#include "paano/tensor.hpp"
#include "paano/trainer.hpp"

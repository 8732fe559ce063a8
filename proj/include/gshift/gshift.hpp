// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "gshift/config.hpp"
#include "gshift/conv.hpp"
#include "gshift/error.hpp"
#include "gshift/gsts.hpp"
#include "gshift/layers.hpp"
#include "gshift/metrics.hpp"
#include "gshift/modules.hpp"
#include "gshift/net.hpp"
#include "gshift/ops.hpp"
#include "gshift/probe.hpp"
#include "gshift/rng.hpp"
#include "gshift/shift.hpp"
#include "gshift/tape.hpp"
#include "gshift/tensor.hpp"
#include "gshift/train.hpp"
#include "gshift/video.hpp"

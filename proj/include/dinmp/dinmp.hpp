// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dinmp/batch.hpp"
#include "dinmp/config.hpp"
#include "dinmp/events.hpp"
#include "dinmp/gradcheck.hpp"
#include "dinmp/ingest.hpp"
#include "dinmp/metrics.hpp"
#include "dinmp/model.hpp"
#include "dinmp/ops.hpp"
#include "dinmp/params.hpp"
#include "dinmp/reports.hpp"
#include "dinmp/stats.hpp"
#include "dinmp/synth.hpp"
#include "dinmp/tensor.hpp"
#include "dinmp/train.hpp"

/*
 * Copyright 2026 CIGN Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include "cign/archs.hpp"
#include "cign/autodiff.hpp"
#include "cign/checkpoint.hpp"
#include "cign/common.hpp"
#include "cign/config.hpp"
#include "cign/data.hpp"
#include "cign/histogram.hpp"
#include "cign/igmath.hpp"
#include "cign/kernels.hpp"
#include "cign/layers.hpp"
#include "cign/metrics.hpp"
#include "cign/network.hpp"
#include "cign/parameters.hpp"
#include "cign/rng.hpp"
#include "cign/schedule.hpp"
#include "cign/serialize.hpp"
#include "cign/tensor.hpp"
#include "cign/tree.hpp"
#include "cign/trainer.hpp"

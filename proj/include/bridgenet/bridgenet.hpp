/* Copyright 2026 The BridgeNet Kit Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef BRIDGENET_BRIDGENET_HPP_
#define BRIDGENET_BRIDGENET_HPP_

#include "bridgenet/binary_io.hpp"
#include "bridgenet/checkpoint.hpp"
#include "bridgenet/config.hpp"
#include "bridgenet/data.hpp"
#include "bridgenet/errors.hpp"
#include "bridgenet/experiment.hpp"
#include "bridgenet/gradcheck.hpp"
#include "bridgenet/losses.hpp"
#include "bridgenet/nn.hpp"
#include "bridgenet/parameters.hpp"
#include "bridgenet/random.hpp"
#include "bridgenet/recursive_net.hpp"
#include "bridgenet/tensor.hpp"
#include "bridgenet/training.hpp"

#endif  // BRIDGENET_BRIDGENET_HPP_

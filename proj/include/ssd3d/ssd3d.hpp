// Copyright 2026 The ssd3d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SSD3D__SSD3D_HPP_
#define SSD3D__SSD3D_HPP_

#include "ssd3d/anchors.hpp"
#include "ssd3d/camera.hpp"
#include "ssd3d/error.hpp"
#include "ssd3d/eval.hpp"
#include "ssd3d/fit.hpp"
#include "ssd3d/geom3d.hpp"
#include "ssd3d/image_io.hpp"
#include "ssd3d/kmedoids.hpp"
#include "ssd3d/loss.hpp"
#include "ssd3d/matching.hpp"
#include "ssd3d/numeric.hpp"
#include "ssd3d/parallel.hpp"
#include "ssd3d/pipeline.hpp"
#include "ssd3d/scene.hpp"
#include "ssd3d/synth.hpp"
#include "ssd3d/tinynet.hpp"

#endif  // SSD3D__SSD3D_HPP_

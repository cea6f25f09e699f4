#pragma once

#include "wrin/tensor.hpp"
#include "wrin/layers.hpp"
#include "wrin/graph.hpp"
#include "wrin/receptive_field.hpp"
#include "wrin/blocks.hpp"
#include "wrin/network.hpp"
#include "wrin/checkpoint.hpp"
#include "wrin/cost.hpp"
#include "wrin/optimizer.hpp"
#include "wrin/cifar.hpp"
#include "wrin/trainer.hpp"
#include "wrin/kitti.hpp"
#include "wrin/detect.hpp"
#include "wrin/detect_eval.hpp"
#include "wrin/detector.hpp"
#include "wrin/gradcheck.hpp"

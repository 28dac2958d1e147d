#pragma once

#include <string>
#include <variant>
#include <vector>

#include "ptd/arch.hpp"

namespace ptd::presets {

/// 0 marks a 2x2 max-pool; positive entries are 3x3 conv widths (each followed by BN + ReLU).
using VggPlan = std::vector<int>;
inline constexpr int kPool = 0;

/// VGG with a single fully connected classifier on the flattened last feature map.
ArchitectureSpec vgg(const std::string& name, const VggPlan& plan, const Shape& input, int classes,
                     bool batchnorm = true);

VggPlan vgg19_plan();
ArchitectureSpec vgg19(int classes = 100, const Shape& input = {3, 32, 32});
ArchitectureSpec vgg19dbl(int classes = 100, const Shape& input = {3, 32, 32});
/// Hand-designed half-size comparison students.
ArchitectureSpec vgg19_cl1(int classes = 100);
ArchitectureSpec vgg19_cl2(int classes = 100);

/// Basic-block ResNet18 (3x3 stem, no stem pool); the final max-pool over the whole
/// feature map stands in for global pooling.
ArchitectureSpec resnet18(int classes = 200, const Shape& input = {3, 64, 64});

/// Small VGG-style network for desk-scale runs.
ArchitectureSpec mini_vgg(int classes = 10, const Shape& input = {3, 16, 16});

/// Two-stage residual network for desk-scale runs.
ArchitectureSpec mini_resnet(int classes = 10, const Shape& input = {3, 16, 16});

/// Looks up any of the above by name (vgg19, vgg19dbl, vgg19_cl1, vgg19_cl2, resnet18,
/// mini_vgg, mini_resnet).
ArchitectureSpec by_name(const std::string& name, int classes, const Shape& input);
std::vector<std::string> names();

}  // namespace ptd::presets

#include "ptd/presets.hpp"

#include "ptd/error.hpp"

namespace ptd::presets {

namespace {

LayerSpec conv3(int in, int out, int stride = 1, bool bias = true) { return {Conv2d{in, out, 3, 3, stride, 1, bias}}; }

LayerSpec basic_block(int in, int out, int stride) {
  ResidualBlock block;
  block.body = {conv3(in, out, stride, false), {BatchNorm{out}}, {ReLU{}}, conv3(out, out, 1, false), {BatchNorm{out}}};
  if (stride != 1 || in != out) block.projection = Conv2d{in, out, 1, 1, stride, 0, false};
  return {std::move(block)};
}

}  // namespace

ArchitectureSpec vgg(const std::string& name, const VggPlan& plan, const Shape& input, int classes, bool batchnorm) {
  ArchitectureSpec arch{name, input, classes, {}};
  int ch = input.at(0);
  for (int width : plan) {
    if (width == kPool) {
      arch.layers.push_back({MaxPool{2, 2}});
      continue;
    }
    arch.layers.push_back(conv3(ch, width));
    if (batchnorm) arch.layers.push_back({BatchNorm{width}});
    arch.layers.push_back({ReLU{}});
    ch = width;
  }
  arch.layers.push_back({Flatten{}});
  arch.layers.push_back({Dense{1, classes}});
  return rewire(std::move(arch));
}

VggPlan vgg19_plan() {
  return {64, 64, kPool, 128, 128, kPool, 256, 256, 256, 256, kPool, 512, 512, 512, 512, kPool,
          512, 512, 512, 512, kPool};
}

ArchitectureSpec vgg19(int classes, const Shape& input) { return vgg("vgg19", vgg19_plan(), input, classes); }

ArchitectureSpec vgg19dbl(int classes, const Shape& input) {
  auto arch = scale_channels(vgg19(classes, input), 2.0);
  arch.name = "vgg19dbl";
  return arch;
}

ArchitectureSpec vgg19_cl1(int classes) {
  return vgg("vgg19_cl1",
             {64, 64, kPool, 64, 64, kPool, 128, 128, 128, 128, kPool, 256, 256, 256, 256, kPool, 512, 512, 512, 512,
              kPool},
             {3, 32, 32}, classes);
}

ArchitectureSpec vgg19_cl2(int classes) {
  return vgg("vgg19_cl2",
             {64, 39, kPool, 179, 79, kPool, 354, 155, 362, 146, kPool, 614, 247, 500, 158, kPool, 271, 139, 547, 512,
              kPool},
             {3, 32, 32}, classes);
}

ArchitectureSpec resnet18(int classes, const Shape& input) {
  ArchitectureSpec arch{"resnet18", input, classes, {}};
  arch.layers = {conv3(input.at(0), 64, 1, false), {BatchNorm{64}}, {ReLU{}}};
  int ch = 64;
  int spatial = input.at(1);
  for (int width : {64, 128, 256, 512}) {
    for (int b = 0; b < 2; ++b) {
      const int stride = (b == 0 && width != 64) ? 2 : 1;
      arch.layers.push_back(basic_block(ch, width, stride));
      arch.layers.push_back({ReLU{}});
      ch = width;
      if (stride == 2) spatial = (spatial - 1) / 2 + 1;
    }
  }
  arch.layers.push_back({MaxPool{spatial, spatial}});
  arch.layers.push_back({Flatten{}});
  arch.layers.push_back({Dense{ch, classes}});
  return rewire(std::move(arch));
}

ArchitectureSpec mini_vgg(int classes, const Shape& input) {
  return vgg("mini_vgg", {16, 16, kPool, 32, 32, kPool, 64, 64, kPool}, input, classes);
}

ArchitectureSpec mini_resnet(int classes, const Shape& input) {
  ArchitectureSpec arch{"mini_resnet", input, classes, {}};
  arch.layers = {conv3(input.at(0), 16, 1, false), {BatchNorm{16}}, {ReLU{}},
                 basic_block(16, 16, 1),           {ReLU{}},        basic_block(16, 32, 2),
                 {ReLU{}},                          {MaxPool{2, 2}}, {Flatten{}},
                 {Dense{1, classes}}};
  return rewire(std::move(arch));
}

std::vector<std::string> names() {
  return {"vgg19", "vgg19dbl", "vgg19_cl1", "vgg19_cl2", "resnet18", "mini_vgg", "mini_resnet"};
}

ArchitectureSpec by_name(const std::string& name, int classes, const Shape& input) {
  if (name == "vgg19") return vgg19(classes, input);
  if (name == "vgg19dbl") return vgg19dbl(classes, input);
  if (name == "vgg19_cl1") return vgg19_cl1(classes);
  if (name == "vgg19_cl2") return vgg19_cl2(classes);
  if (name == "resnet18") return resnet18(classes, input);
  if (name == "mini_vgg") return mini_vgg(classes, input);
  if (name == "mini_resnet") return mini_resnet(classes, input);
  throw ConfigError("unknown architecture preset '" + name + "'");
}

}  // namespace ptd::presets

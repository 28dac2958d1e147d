// Writes the built-in presets (at their default shapes) as architecture JSON files.
#include <filesystem>
#include <iostream>

#include "ptd/arch.hpp"
#include "ptd/presets.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  using namespace ptd;
  const fs::path dir = argc > 1 ? argv[1] : "archs";
  fs::create_directories(dir);
  const std::pair<const char*, ArchitectureSpec> all[] = {
      {"vgg19", presets::vgg19()},         {"vgg19dbl", presets::vgg19dbl()},
      {"vgg19_cl1", presets::vgg19_cl1()}, {"vgg19_cl2", presets::vgg19_cl2()},
      {"resnet18", presets::resnet18()},   {"mini_vgg", presets::mini_vgg()},
      {"mini_resnet", presets::mini_resnet()}};
  for (const auto& [name, arch] : all) {
    const auto path = dir / (std::string(name) + ".json");
    save_arch_file(arch, path.string());
    std::cout << path.string() << '\n';
  }
  return 0;
}

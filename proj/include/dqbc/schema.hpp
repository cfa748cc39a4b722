#pragma once

#include <array>
#include <string>
#include <vector>

#include "dqbc/correlation.hpp"
#include "dqbc/motion.hpp"

namespace dqbc {

// Channel widths for every learned stage. These are artifact defaults; the
// weight archive's declared shapes are the ground truth at load time.
struct ModelDims {
  std::array<int, 3> extractor = {32, 64, 96};
  int mgm_context = 64;
  int mgm_hidden = 256;
  int mgm_reduced = 128;
  int mgm_generator = 96;
  // Context widths at 1/2, 1/4 and 1/8 resolution.
  std::array<int, 3> context = {32, 48, 64};
  int upblock_hidden = 64;
  std::array<int, 3> synth_down = {32, 64, 96};
  std::array<int, 3> synth_up = {64, 32, 32};

  void validate() const {
    auto positive = [](int v) { return v > 0; };
    bool ok = positive(mgm_context) && positive(mgm_hidden) &&
              positive(mgm_reduced) && positive(mgm_generator) &&
              positive(upblock_hidden);
    for (int v : extractor) ok = ok && positive(v);
    for (int v : context) ok = ok && positive(v);
    for (int v : synth_down) ok = ok && positive(v);
    for (int v : synth_up) ok = ok && positive(v);
    if (!ok) throw ConfigError("ModelDims: all widths must be positive");
  }
};

// One convolution layer's place in the archive: the kernel tensor name is
// "<name>.kernel", the bias "<name>.bias". Stride and padding are structural
// and never serialized.
struct ConvDecl {
  std::string name;
  int out_channels = 0;
  int in_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
};

// Every learned layer in pipeline order. Derived from the pyramid config
// (correlation channel counts) and the width table.
inline std::vector<ConvDecl> build_schema(const PyramidConfig& config,
                                          const ModelDims& dims) {
  config.validate();
  dims.validate();
  const int corr = config.channels_per_direction();
  const int dqbc_channels = 2 * corr;
  std::vector<ConvDecl> decls;

  decls.push_back({"dqbc.extractor.conv0", dims.extractor[0], 3, 3, 2, 1});
  decls.push_back(
      {"dqbc.extractor.conv1", dims.extractor[1], dims.extractor[0], 3, 2, 1});
  decls.push_back(
      {"dqbc.extractor.conv2", dims.extractor[2], dims.extractor[1], 3, 2, 1});

  decls.push_back({"dqbc.enhance.conv0", corr, corr, 3, 1, 1});
  decls.push_back({"dqbc.enhance.conv1", corr, corr, 3, 1, 1});

  decls.push_back({"mgm.context.conv0", dims.mgm_context, 6, 3, 2, 1});
  decls.push_back(
      {"mgm.context.conv1", dims.mgm_context, dims.mgm_context, 3, 2, 1});
  decls.push_back(
      {"mgm.context.conv2", dims.mgm_context, dims.mgm_context, 3, 2, 1});
  decls.push_back({"mgm.reduce.conv0", dims.mgm_hidden, dqbc_channels, 1, 1, 0});
  decls.push_back({"mgm.reduce.conv1", dims.mgm_reduced, dims.mgm_hidden, 1, 1, 0});
  decls.push_back({"mgm.generate.conv0", dims.mgm_generator,
                   dims.mgm_context + dims.mgm_reduced, 3, 1, 1});
  decls.push_back({"mgm.generate.conv1", 4, dims.mgm_generator, 3, 1, 1});

  // ContextNet blocks produce widths context[0] at 1/2 through context[2]
  // at 1/8.
  int ctx_in = 3;
  for (int b = 0; b < 3; ++b) {
    const std::string base = "context.down" + std::to_string(b);
    decls.push_back({base + ".conv0", dims.context[b], ctx_in, 3, 2, 1});
    decls.push_back({base + ".conv1", dims.context[b], dims.context[b], 3, 1, 1});
    ctx_in = dims.context[b];
  }

  // UpBlock i consumes the context level at its own resolution: block 1 the
  // 1/8 features (context[2]), block 3 the 1/2 features (context[0]).
  for (int b = 1; b <= 3; ++b) {
    const std::string base = "mrm.up" + std::to_string(b);
    const int ctx_width = dims.context[3 - b];
    const int trunk_in = 4 + 2 * ctx_width;
    if (b > 1) {
      decls.push_back({base + ".hidden", dims.upblock_hidden,
                       dims.upblock_hidden, 3, 1, 1});
    }
    decls.push_back({base + ".trunk0", dims.upblock_hidden, trunk_in, 3, 1, 1});
    decls.push_back(
        {base + ".trunk1", dims.upblock_hidden, dims.upblock_hidden, 3, 1, 1});
    decls.push_back(
        {base + ".head", kUpBlockHeadChannels, dims.upblock_hidden, 3, 1, 1});
  }
  decls.push_back({"mrm.occlusion", 1, dims.upblock_hidden, 3, 1, 1});

  int synth_in = 7;  // two warped frames + occlusion
  for (int b = 0; b < 3; ++b) {
    const std::string base = "synth.down" + std::to_string(b);
    decls.push_back({base + ".conv0", dims.synth_down[b], synth_in, 3, 2, 1});
    decls.push_back(
        {base + ".conv1", dims.synth_down[b], dims.synth_down[b], 3, 1, 1});
    synth_in = dims.synth_down[b];
  }
  // Decoder fuses the hidden state with the context pair at 1/8, then 1/4,
  // then 1/2.
  int hidden_in = dims.synth_down[2];
  for (int b = 0; b < 3; ++b) {
    const std::string base = "synth.up" + std::to_string(b);
    const int ctx_width = dims.context[2 - b];
    decls.push_back(
        {base + ".fuse", dims.synth_up[b], hidden_in + 2 * ctx_width, 3, 1, 1});
    decls.push_back({base + ".rb0", dims.synth_up[b], dims.synth_up[b], 3, 1, 1});
    decls.push_back({base + ".rb1", dims.synth_up[b], dims.synth_up[b], 3, 1, 1});
    hidden_in = dims.synth_up[b];
  }
  decls.push_back({"synth.head", 4, dims.synth_up[2], 3, 1, 1});

  return decls;
}

}  // namespace dqbc

#include "pyrseg/model.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pyrseg/config.hpp"
#include "pyrseg/error.hpp"

namespace pyrseg {

void ModelConfig::validate() const {
  if (in_channels < 1) throw ConfigError("model.in_channels must be positive");
  if (num_classes < 1) throw ConfigError("model.num_classes must be positive");
  if (static_cast<int>(encoder_widths.size()) != kPyramidLevels) {
    throw ConfigError("model.encoder_widths needs exactly 4 stages");
  }
  for (int w : encoder_widths) {
    if (w < 1) throw ConfigError("model.encoder_widths must be positive");
  }
  if (bottleneck_width < 1) throw ConfigError("model.bottleneck_width must be positive");
  const int divisor = 1 << encoder_widths.size();
  if (input_size < divisor || input_size % divisor != 0) {
    throw ConfigError("model.input_size " + std::to_string(input_size) +
                      " must be a positive multiple of " + std::to_string(divisor));
  }
  if (dpr_merge_kernel < 1 || dpr_merge_kernel % 2 == 0) {
    throw ConfigError("model.dpr_merge_kernel must be odd");
  }
  if (pvf_fusion_kernel < 1 || pvf_fusion_kernel % 2 == 0) {
    throw ConfigError("model.pvf_fusion_kernel must be odd");
  }
  if (use_pvf) {
    PyramidSpec spec{pvf_kernels, pvf_global, 1};
    spec.validate();
    // The coarsest decoder stage runs at input_size / 8.
    const int coarsest = input_size / 8;
    if (!pvf_kernels.empty() && pvf_kernels.back() > 2 * coarsest - 1) {
      throw ConfigError("model.pvf_kernels: pool " + std::to_string(pvf_kernels.back()) +
                        " too large for the " + std::to_string(coarsest) + "px decoder stage");
    }
  }
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  Rng rng(seed);
  const auto& widths = config_.encoder_widths;
  int in = config_.in_channels;
  for (int w : widths) {
    encoder_.push_back({ConvLayer::create(ConvSpec::same(in, w, 3), rng),
                        ConvLayer::create(ConvSpec::same(w, w, 3), rng)});
    in = w;
  }
  bottleneck_first_ = ConvLayer::create(ConvSpec::same(in, config_.bottleneck_width, 3), rng);
  bottleneck_second_ = ConvLayer::create(
      ConvSpec::same(config_.bottleneck_width, config_.bottleneck_width, 3), rng);

  int dec = config_.bottleneck_width;
  for (int j = 0; j < kPyramidLevels; ++j) {
    const int level = kPyramidLevels - 1 - j;  // 3 -> 1/8 ... 0 -> full
    const int skip = widths[level];
    const int out = skip;
    DecoderStage stage;
    // PVF ahead of DPR sees the upsampled decoder map alone.
    const bool pvf_first = config_.stage_order == StageOrder::pvf_then_dpr;
    if (config_.use_pvf && pvf_first) {
      PyramidSpec spec{config_.pvf_kernels, config_.pvf_global, 0};
      spec.bottleneck_channels = default_bottleneck_channels(dec, spec.branches());
      stage.pvf = PvfBlock::create(dec, dec, spec, rng, config_.pvf_fusion_kernel);
    }
    if (config_.use_dpr) {
      stage.dpr = DprBlock::create(skip + dec, out, rng, config_.dpr_merge_kernel,
                                   config_.offset_activation);
      stage.dpr->deformable = config_.dpr_deformable;
    } else {
      stage.plain_first = ConvLayer::create(ConvSpec::same(skip + dec, out, 3), rng);
      stage.plain_second = ConvLayer::create(ConvSpec::same(out, out, 3), rng);
    }
    if (config_.use_pvf && !pvf_first) {
      PyramidSpec spec{config_.pvf_kernels, config_.pvf_global, 0};
      spec.bottleneck_channels = default_bottleneck_channels(out, spec.branches());
      stage.pvf = PvfBlock::create(out, out, spec, rng, config_.pvf_fusion_kernel);
    }
    if (config_.use_pl || level == 0) {
      stage.head = ConvLayer::create(ConvSpec::same(out, config_.num_classes, 1), rng);
    }
    decoder_.push_back(std::move(stage));
    dec = out;
  }
}

PyramidLogits Model::forward(const Tensor& image) const {
  const Shape s = image.shape();
  if (s.c != config_.in_channels || s.h != config_.input_size || s.w != config_.input_size) {
    throw ShapeError("model input " + s.str() + " does not match config (" +
                     std::to_string(config_.in_channels) + " channels, " +
                     std::to_string(config_.input_size) + "px)");
  }
  std::vector<Tensor> skips;
  Tensor x = image;
  for (const auto& stage : encoder_) {
    x = relu(conv2d(relu(conv2d(x, stage.first)), stage.second));
    skips.push_back(x);
    x = max_pool2(x);
  }
  x = relu(conv2d(relu(conv2d(x, bottleneck_first_)), bottleneck_second_));

  PyramidLogits logits;
  for (int j = 0; j < kPyramidLevels; ++j) {
    const int level = kPyramidLevels - 1 - j;
    const DecoderStage& stage = decoder_[j];
    const Tensor& skip = skips[level];
    Tensor up = upsample_to(x, skip.shape().h, skip.shape().w, UpsampleMode::bilinear);
    const bool pvf_first = config_.stage_order == StageOrder::pvf_then_dpr;
    if (stage.pvf && pvf_first) up = pvf_forward(up, *stage.pvf);
    if (stage.dpr) {
      x = dpr_forward(skip, up, *stage.dpr);
    } else {
      x = relu(conv2d(relu(conv2d(concat_channels(skip, up), *stage.plain_first)),
                      *stage.plain_second));
    }
    if (stage.pvf && !pvf_first) x = pvf_forward(x, *stage.pvf);
    if (stage.head) logits[level] = conv2d(x, *stage.head);
  }
  return logits;
}

namespace {

void add_conv(std::vector<NamedParameter>& out, const std::string& name, const ConvLayer& l) {
  out.push_back({name + ".weight", l.weight});
  out.push_back({name + ".bias", l.bias});
}

}  // namespace

std::vector<NamedParameter> Model::parameters() const {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    add_conv(out, p + ".conv1", encoder_[i].first);
    add_conv(out, p + ".conv2", encoder_[i].second);
  }
  add_conv(out, "bottleneck.conv1", bottleneck_first_);
  add_conv(out, "bottleneck.conv2", bottleneck_second_);
  for (std::size_t j = 0; j < decoder_.size(); ++j) {
    const DecoderStage& st = decoder_[j];
    const std::string p = "dec" + std::to_string(j);
    if (st.dpr) {
      add_conv(out, p + ".dpr.plain", st.dpr->plain);
      add_conv(out, p + ".dpr.def3.offset", st.dpr->def3.offset_conv);
      add_conv(out, p + ".dpr.def3.main", st.dpr->def3.main_conv);
      add_conv(out, p + ".dpr.def6.offset", st.dpr->def6.offset_conv);
      add_conv(out, p + ".dpr.def6.main", st.dpr->def6.main_conv);
      for (std::size_t m = 0; m < st.dpr->merge.size(); ++m) {
        add_conv(out, p + ".dpr.merge" + std::to_string(m), st.dpr->merge[m]);
      }
    } else {
      add_conv(out, p + ".conv1", *st.plain_first);
      add_conv(out, p + ".conv2", *st.plain_second);
    }
    if (st.pvf) {
      add_conv(out, p + ".pvf.bottleneck", st.pvf->bottleneck);
      add_conv(out, p + ".pvf.grouped", st.pvf->fusion_grouped);
      add_conv(out, p + ".pvf.full", st.pvf->fusion_full);
      out.push_back({p + ".pvf.norm.gain", st.pvf->norm_gain});
      out.push_back({p + ".pvf.norm.offset", st.pvf->norm_offset});
    }
    if (st.head) add_conv(out, p + ".head", *st.head);
  }
  return out;
}

std::size_t Model::parameter_count() const {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

std::size_t Model::auxiliary_head_parameter_count() const {
  std::size_t total = 0;
  for (std::size_t j = 0; j + 1 < decoder_.size(); ++j) {
    if (decoder_[j].head) total += decoder_[j].head->parameter_count();
  }
  return total;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.tensor.zero_grad();
}

Model Model::clone() const {
  Model copy(config_, 0);
  copy.copy_parameters_from(*this);
  return copy;
}

void Model::copy_parameters_from(const Model& other) {
  auto dst = parameters();
  auto src = other.parameters();
  if (dst.size() != src.size()) throw ShapeError("copy_parameters_from: architecture mismatch");
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (dst[i].name != src[i].name || dst[i].tensor.shape() != src[i].tensor.shape()) {
      throw ShapeError("copy_parameters_from: parameter mismatch at " + dst[i].name);
    }
    auto d = dst[i].tensor.mutable_data();
    auto s = src[i].tensor.data();
    std::copy(s.begin(), s.end(), d.begin());
  }
}

void Model::save(const std::string& dir) const {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + dir + ": " + ec.message());
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  if (!manifest) throw IoError("cannot write checkpoint manifest in " + dir);
  manifest << "# pyrseg checkpoint v1\n";
  write_key_values(manifest, to_key_values(config_));
  for (const auto& p : parameters()) {
    const std::string file = p.name + ".tnsr";
    manifest << "param " << p.name << ' ' << p.tensor.shape().str() << ' ' << file << '\n';
    save_tensor((fs::path(dir) / file).string(), p.tensor);
  }
  if (!manifest) throw IoError("failed writing checkpoint manifest in " + dir);
}

Model Model::load(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "manifest.txt");
  if (!in) throw IoError("missing checkpoint manifest in " + dir);
  KeyValues kv;
  std::vector<std::pair<std::string, std::string>> files;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("param ", 0) == 0) {
      std::istringstream ls(line.substr(6));
      std::string name, shape, file;
      if (!(ls >> name >> shape >> file)) throw FormatError("bad manifest line: " + line);
      files.emplace_back(name, file);
      continue;
    }
    auto [key, value] = parse_key_value_line(line);
    kv[key] = value;
  }
  ModelConfig config;
  apply_key_values(config, kv);
  Model model(config, 0);
  auto params = model.parameters();
  if (params.size() != files.size()) {
    throw FormatError("checkpoint parameter count does not match its config");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != files[i].first) {
      throw FormatError("checkpoint parameter order mismatch at " + files[i].first);
    }
    Tensor t = load_tensor((fs::path(dir) / files[i].second).string());
    if (t.shape() != params[i].tensor.shape()) {
      throw FormatError("checkpoint tensor shape mismatch for " + files[i].first);
    }
    auto d = params[i].tensor.mutable_data();
    std::copy(t.data().begin(), t.data().end(), d.begin());
  }
  return model;
}

Tensor logits_to_mask(const Tensor& logits) {
  const Shape s = logits.shape();
  const std::size_t plane = s.plane();
  std::vector<float> mask(static_cast<std::size_t>(s.n) * plane);
  auto d = logits.data();
  for (int n = 0; n < s.n; ++n) {
    const float* base = d.data() + static_cast<std::size_t>(n) * s.c * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      if (s.c == 1) {
        mask[n * plane + p] = base[p] > 0.f ? 1.f : 0.f;
        continue;
      }
      int best = 0;
      for (int c = 1; c < s.c; ++c) {
        if (base[c * plane + p] > base[best * plane + p]) best = c;
      }
      mask[n * plane + p] = static_cast<float>(best);
    }
  }
  return Tensor({s.n, 1, s.h, s.w}, std::move(mask));
}

Tensor predict_mask(const Tensor& image, const Model& model) {
  NoGradGuard guard;
  return logits_to_mask(model.forward(image)[0]);
}

}  // namespace pyrseg

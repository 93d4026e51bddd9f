#include "pyrseg/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

#include "pyrseg/error.hpp"

namespace pyrseg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_float(float v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string format_float(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string format_bool(bool v) { return v ? "true" : "false"; }

std::string format_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = first + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("bad value for " + key + ": '" + value + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "on") return true;
  if (value == "false" || value == "0" || value == "off") return false;
  throw ConfigError("bad boolean for " + key + ": '" + value + "'");
}

std::vector<int> parse_ints(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

// Iterates the keys of one section and hands them to `apply`, which returns
// false for a key it does not know.
template <typename Fn>
void for_section(const KeyValues& kv, const std::string& prefix, Fn apply) {
  for (const auto& [key, value] : kv) {
    if (key.rfind(prefix, 0) != 0) continue;
    const std::string field = key.substr(prefix.size());
    if (!apply(field, key, value)) throw ConfigError("unknown config key: " + key);
  }
}

}  // namespace

std::pair<std::string, std::string> parse_key_value_line(const std::string& raw) {
  const std::string line = raw.substr(0, raw.find('#'));
  const auto eq = line.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key = value, got '" + line + "'");
  std::string key = trim(line.substr(0, eq));
  std::string value = trim(line.substr(eq + 1));
  if (key.empty()) throw ConfigError("empty key in '" + line + "'");
  return {key, value};
}

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line.substr(0, line.find('#'))).empty()) continue;
    auto [key, value] = parse_key_value_line(line);
    kv[key] = value;
  }
  return kv;
}

KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  return parse_key_values(in);
}

void write_key_values(std::ostream& out, const KeyValues& kv) {
  for (const auto& [key, value] : kv) out << key << " = " << value << '\n';
}

KeyValues to_key_values(const ModelConfig& c) {
  return {
      {"model.in_channels", std::to_string(c.in_channels)},
      {"model.num_classes", std::to_string(c.num_classes)},
      {"model.encoder_widths", format_ints(c.encoder_widths)},
      {"model.bottleneck_width", std::to_string(c.bottleneck_width)},
      {"model.input_size", std::to_string(c.input_size)},
      {"model.use_pvf", format_bool(c.use_pvf)},
      {"model.use_dpr", format_bool(c.use_dpr)},
      {"model.use_pl", format_bool(c.use_pl)},
      {"model.pvf_kernels", format_ints(c.pvf_kernels)},
      {"model.pvf_global", format_bool(c.pvf_global)},
      {"model.pvf_fusion_kernel", std::to_string(c.pvf_fusion_kernel)},
      {"model.dpr_merge_kernel", std::to_string(c.dpr_merge_kernel)},
      {"model.dpr_deformable", format_bool(c.dpr_deformable)},
      {"model.offset_activation", to_string(c.offset_activation)},
      {"model.stage_order",
       c.stage_order == StageOrder::dpr_then_pvf ? "dpr_then_pvf" : "pvf_then_dpr"},
  };
}

void apply_key_values(ModelConfig& c, const KeyValues& kv) {
  for_section(kv, "model.", [&](const std::string& f, const std::string& k,
                                const std::string& v) {
    if (f == "in_channels") c.in_channels = parse_number<int>(k, v);
    else if (f == "num_classes") c.num_classes = parse_number<int>(k, v);
    else if (f == "encoder_widths") c.encoder_widths = parse_ints(k, v);
    else if (f == "bottleneck_width") c.bottleneck_width = parse_number<int>(k, v);
    else if (f == "input_size") c.input_size = parse_number<int>(k, v);
    else if (f == "use_pvf") c.use_pvf = parse_bool(k, v);
    else if (f == "use_dpr") c.use_dpr = parse_bool(k, v);
    else if (f == "use_pl") c.use_pl = parse_bool(k, v);
    else if (f == "pvf_kernels") c.pvf_kernels = parse_ints(k, v);
    else if (f == "pvf_global") c.pvf_global = parse_bool(k, v);
    else if (f == "pvf_fusion_kernel") c.pvf_fusion_kernel = parse_number<int>(k, v);
    else if (f == "dpr_merge_kernel") c.dpr_merge_kernel = parse_number<int>(k, v);
    else if (f == "dpr_deformable") c.dpr_deformable = parse_bool(k, v);
    else if (f == "offset_activation") c.offset_activation = parse_offset_activation(v);
    else if (f == "stage_order") {
      if (v == "dpr_then_pvf") c.stage_order = StageOrder::dpr_then_pvf;
      else if (v == "pvf_then_dpr") c.stage_order = StageOrder::pvf_then_dpr;
      else throw ConfigError("bad value for " + k + ": '" + v + "'");
    } else {
      return false;
    }
    return true;
  });
}

KeyValues to_key_values(const LossWeights& w) {
  return {
      {"loss.alpha", format_float(w.alpha)},
      {"loss.beta", format_float(w.beta)},
      {"loss.gamma", format_float(w.gamma)},
      {"loss.bce_weight", format_float(w.bce_weight)},
      {"loss.dice_weight", format_float(w.dice_weight)},
      {"loss.dice_eps", format_float(w.dice_eps)},
  };
}

void apply_key_values(LossWeights& w, const KeyValues& kv) {
  for_section(kv, "loss.", [&](const std::string& f, const std::string& k,
                               const std::string& v) {
    float* target = f == "alpha"         ? &w.alpha
                    : f == "beta"        ? &w.beta
                    : f == "gamma"       ? &w.gamma
                    : f == "bce_weight"  ? &w.bce_weight
                    : f == "dice_weight" ? &w.dice_weight
                    : f == "dice_eps"    ? &w.dice_eps
                                         : nullptr;
    if (!target) return false;
    *target = parse_number<float>(k, v);
    return true;
  });
}

KeyValues to_key_values(const CorpusSpec& d) {
  return {
      {"data.root", d.root},
      {"data.size", std::to_string(d.size)},
      {"data.train", std::to_string(d.train)},
      {"data.val", std::to_string(d.val)},
      {"data.test", std::to_string(d.test)},
      {"data.seed", std::to_string(d.seed)},
  };
}

void apply_key_values(CorpusSpec& d, const KeyValues& kv) {
  for_section(kv, "data.", [&](const std::string& f, const std::string& k,
                               const std::string& v) {
    if (f == "root") d.root = v;
    else if (f == "size") d.size = parse_number<int>(k, v);
    else if (f == "train") d.train = parse_number<int>(k, v);
    else if (f == "val") d.val = parse_number<int>(k, v);
    else if (f == "test") d.test = parse_number<int>(k, v);
    else if (f == "seed") d.seed = parse_number<std::uint64_t>(k, v);
    else return false;
    return true;
  });
}

KeyValues to_key_values(const RunConfig& r) {
  const TrainConfig& t = r.train;
  KeyValues kv = to_key_values(t.model);
  kv.merge(to_key_values(t.loss));
  kv.merge(to_key_values(r.data));
  kv["train.lr"] = format_float(t.lr);
  kv["train.lr_grid"] = format_bool(t.lr_grid);
  kv["train.epochs"] = std::to_string(t.epochs);
  kv["train.batch_size"] = std::to_string(t.batch_size);
  kv["train.decay_factor"] = format_float(t.decay_factor);
  kv["train.decay_period"] = std::to_string(t.decay_period);
  kv["train.clip"] = format_float(t.clip);
  kv["train.clip_mode"] = t.clip_mode == ClipMode::global_norm ? "global_norm" : "value";
  kv["train.optimizer"] = t.optimizer == OptimizerKind::adam ? "adam" : "sgd";
  kv["train.momentum"] = format_float(t.momentum);
  kv["train.weight_decay"] = format_float(t.weight_decay);
  kv["train.seed"] = std::to_string(t.seed);
  kv["train.augment"] = format_bool(t.augment);
  return kv;
}

void apply_key_values(RunConfig& r, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    const bool known = key.rfind("model.", 0) == 0 || key.rfind("loss.", 0) == 0 ||
                       key.rfind("train.", 0) == 0 || key.rfind("data.", 0) == 0;
    if (!known) throw ConfigError("unknown config key: " + key);
  }
  apply_key_values(r.train.model, kv);
  apply_key_values(r.train.loss, kv);
  apply_key_values(r.data, kv);
  TrainConfig& t = r.train;
  for_section(kv, "train.", [&](const std::string& f, const std::string& k,
                                const std::string& v) {
    if (f == "lr") t.lr = parse_number<float>(k, v);
    else if (f == "lr_grid") t.lr_grid = parse_bool(k, v);
    else if (f == "epochs") t.epochs = parse_number<int>(k, v);
    else if (f == "batch_size") t.batch_size = parse_number<int>(k, v);
    else if (f == "decay_factor") t.decay_factor = parse_number<double>(k, v);
    else if (f == "decay_period") t.decay_period = parse_number<int>(k, v);
    else if (f == "clip") t.clip = parse_number<float>(k, v);
    else if (f == "clip_mode") {
      if (v == "global_norm") t.clip_mode = ClipMode::global_norm;
      else if (v == "value") t.clip_mode = ClipMode::value;
      else throw ConfigError("bad value for " + k + ": '" + v + "'");
    } else if (f == "optimizer") {
      if (v == "adam") t.optimizer = OptimizerKind::adam;
      else if (v == "sgd") t.optimizer = OptimizerKind::sgd;
      else throw ConfigError("bad value for " + k + ": '" + v + "'");
    } else if (f == "momentum") t.momentum = parse_number<float>(k, v);
    else if (f == "weight_decay") t.weight_decay = parse_number<float>(k, v);
    else if (f == "seed") t.seed = parse_number<std::uint64_t>(k, v);
    else if (f == "augment") t.augment = parse_bool(k, v);
    else return false;
    return true;
  });
}

}  // namespace pyrseg

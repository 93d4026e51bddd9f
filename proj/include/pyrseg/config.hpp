#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>

#include "pyrseg/loss.hpp"
#include "pyrseg/model.hpp"
#include "pyrseg/synth.hpp"
#include "pyrseg/trainer.hpp"

namespace pyrseg {

// Flat `key = value` configuration. Keys carry a dotted section prefix
// (`model.`, `loss.`, `train.`, `data.`); lists are comma separated.
using KeyValues = std::map<std::string, std::string>;

// Parses `key = value` (spaces optional, `#` starts a comment). Throws
// ConfigError for a line without '='.
std::pair<std::string, std::string> parse_key_value_line(const std::string& line);
KeyValues parse_key_values(std::istream& in);
KeyValues load_key_values(const std::string& path);
void write_key_values(std::ostream& out, const KeyValues& kv);

KeyValues to_key_values(const ModelConfig& c);
KeyValues to_key_values(const LossWeights& w);
KeyValues to_key_values(const CorpusSpec& d);

// Each overload consumes the keys of its own section and rejects unknown keys
// in that section with ConfigError. Keys from other sections are ignored.
void apply_key_values(ModelConfig& c, const KeyValues& kv);
void apply_key_values(LossWeights& w, const KeyValues& kv);
void apply_key_values(CorpusSpec& d, const KeyValues& kv);

struct RunConfig {
  TrainConfig train;
  CorpusSpec data;
};

KeyValues to_key_values(const RunConfig& r);
// Rejects any key outside the model/loss/train/data sections.
void apply_key_values(RunConfig& r, const KeyValues& kv);

}  // namespace pyrseg

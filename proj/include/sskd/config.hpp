#pragma once

// Flat `key = value` configuration files. Blank lines and lines starting with
// '#' are ignored; every other line must name a known key. See config_keys()
// for the full list.

#include "sskd/synthdata.hpp"
#include "sskd/training.hpp"

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace sskd {

struct PipelineConfig {
    TrainConfig train;
    BenchmarkSpec bench = bench_v1();
};

class ConfigError : public std::runtime_error {
public:
    ConfigError(std::string key, const std::string &msg)
        : std::runtime_error(msg), key_(std::move(key)) {}
    const std::string &key() const { return key_; }

private:
    std::string key_;
};

std::vector<std::string> config_keys();

/// Sets one key; throws ConfigError naming the key if it is unknown or the
/// value does not parse.
void set_config_value(PipelineConfig &cfg, const std::string &key, const std::string &value);
std::string get_config_value(const PipelineConfig &cfg, const std::string &key);

PipelineConfig parse_config(std::istream &in);
PipelineConfig load_config(const std::string &path);
/// Every key with its current value, one per line, in config_keys() order.
std::string format_config(const PipelineConfig &cfg);

} // namespace sskd

// SPDX-License-Identifier: Apache-2.0
#include "pg/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace pg {

namespace fs = std::filesystem;
namespace pt = boost::property_tree;

namespace {

const std::map<std::string, std::set<std::string>> kSchema = {
    {"experiment", {"model", "dataset", "output", "eval_limit"}},
    {"pg",
     {"bits", "msb_bits", "sigma", "delta_target", "alpha", "mode",
      "fixed_threshold"}},
    {"train",
     {"batch_size", "epochs", "lr", "lr_decay_epochs", "lr_decay_factor",
      "momentum", "weight_decay", "threshold_lr_scale", "seed",
      "sparse_backprop", "train_limit"}},
    {"sweep", {"thresholds"}},
    {"bench", {"dims", "sparsities", "repeats", "seed"}},
    {"maps", {"layer", "count", "aggregate"}},
};

std::string trim(const std::string &s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos)
    return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

std::vector<std::string> split_list(const std::string &s, char sep = ',') {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep))
    if (!trim(item).empty())
      out.push_back(trim(item));
  return out;
}

template <class T> T number(const std::string &where, const std::string &text) {
  T v{};
  const char *end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty())
    throw ConfigError(where + ": cannot parse '" + text + "' as a number");
  return v;
}

bool boolean(const std::string &where, const std::string &text) {
  if (text == "true" || text == "1" || text == "yes")
    return true;
  if (text == "false" || text == "0" || text == "no")
    return false;
  throw ConfigError(where + ": expected true or false, got '" + text + "'");
}

template <class T> std::string text(T v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class T> std::string join(const std::vector<T> &v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? "," : "") + text(v[i]);
  return s;
}

fs::path resolve_dataset(const std::string &dataset, const fs::path &base_dir) {
  const char *env = std::getenv("PG_DATA_DIR");
  std::vector<fs::path> tried;
  if (dataset.empty()) {
    if (env && *env)
      tried.emplace_back(env);
  } else if (fs::path(dataset).is_absolute()) {
    tried.emplace_back(dataset);
  } else {
    tried.push_back(base_dir / dataset);
    if (env && *env)
      tried.push_back(fs::path(env) / dataset);
  }
  for (const fs::path &p : tried)
    if (fs::is_directory(p))
      return fs::weakly_canonical(p);
  std::string msg = "[experiment] dataset: no directory found for '" + dataset + "'";
  if (tried.empty())
    msg += " and PG_DATA_DIR is not set";
  for (const fs::path &p : tried)
    msg += "\n  tried " + p.string();
  throw ConfigError(msg);
}

} // namespace

ExperimentConfig parse_config(const std::string &ini, const fs::path &base_dir) {
  pt::ptree tree;
  try {
    std::istringstream in(ini);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error &e) {
    throw ConfigError(std::string("malformed INI: ") + e.what());
  }
  for (const auto &[section, keys] : tree) {
    const auto it = kSchema.find(section);
    if (it == kSchema.end())
      throw ConfigError("unknown section [" + section + "]");
    if (!keys.data().empty())
      throw ConfigError("key '" + section + "' outside any section");
    for (const auto &[key, value] : keys)
      if (!it->second.count(key))
        throw ConfigError("unknown key '" + key + "' in [" + section + "]");
  }

  ExperimentConfig c;
  const auto get = [&](const char *section, const char *key) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(
            std::string(section) + "/" + key, '/')))
      return trim(*v);
    return std::nullopt;
  };
  const auto where = [](const char *section, const char *key) {
    return "[" + std::string(section) + "] " + key;
  };
  const auto num = [&]<class T>(const char *section, const char *key, T &dst) {
    if (auto v = get(section, key))
      dst = number<T>(where(section, key), *v);
  };

  if (auto v = get("experiment", "model"))
    c.model = *v;
  else
    throw ConfigError("[experiment] model is required");
  if (c.model != "mlp" && c.model != "cnn")
    throw ConfigError("[experiment] model: expected mlp or cnn, got '" + c.model + "'");
  if (auto v = get("experiment", "dataset"))
    c.dataset = *v;
  if (auto v = get("experiment", "output"))
    c.output = *v;
  num("experiment", "eval_limit", c.eval_limit);

  num("pg", "bits", c.pg.bits);
  num("pg", "msb_bits", c.pg.msb_bits);
  num("pg", "sigma", c.pg.sigma);
  num("pg", "delta_target", c.pg.delta_target);
  num("pg", "alpha", c.pg.alpha);
  num("pg", "fixed_threshold", c.pg.fixed_threshold);
  if (auto v = get("pg", "mode")) {
    if (*v == "learnable")
      c.pg.mode = ThresholdMode::learnable;
    else if (*v == "fixed")
      c.pg.mode = ThresholdMode::fixed;
    else
      throw ConfigError("[pg] mode: expected learnable or fixed, got '" + *v + "'");
  }
  try {
    c.pg.validate();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(std::string("[pg] ") + e.what());
  }

  num("train", "batch_size", c.train.batch_size);
  num("train", "epochs", c.train.epochs);
  num("train", "lr", c.train.lr.initial);
  num("train", "lr_decay_factor", c.train.lr.factor);
  num("train", "momentum", c.train.momentum);
  num("train", "weight_decay", c.train.weight_decay);
  num("train", "threshold_lr_scale", c.train.threshold_lr_scale);
  num("train", "seed", c.train.seed);
  num("train", "train_limit", c.train.train_limit);
  if (auto v = get("train", "lr_decay_epochs")) {
    c.train.lr.decay_epochs.clear();
    for (const std::string &e : split_list(*v))
      c.train.lr.decay_epochs.push_back(number<int>(where("train", "lr_decay_epochs"), e));
  }
  if (auto v = get("train", "sparse_backprop"))
    c.train.sparse_backprop = boolean(where("train", "sparse_backprop"), *v);
  try {
    c.train.validate();
  } catch (const std::invalid_argument &e) {
    throw ConfigError(std::string("[train] ") + e.what());
  }

  if (auto v = get("sweep", "thresholds")) {
    c.sweep_thresholds.clear();
    for (const std::string &t : split_list(*v))
      c.sweep_thresholds.push_back(number<float>(where("sweep", "thresholds"), t));
  }

  if (auto v = get("bench", "dims")) {
    c.bench_dims.clear();
    for (const std::string &d : split_list(*v)) {
      const auto parts = split_list(d, 'x');
      if (parts.size() != 3)
        throw ConfigError("[bench] dims: expected MxKxN, got '" + d + "'");
      c.bench_dims.push_back({number<std::size_t>(where("bench", "dims"), parts[0]),
                              number<std::size_t>(where("bench", "dims"), parts[1]),
                              number<std::size_t>(where("bench", "dims"), parts[2])});
    }
  }
  if (auto v = get("bench", "sparsities")) {
    c.bench_sparsities.clear();
    for (const std::string &s : split_list(*v)) {
      const double sp = number<double>(where("bench", "sparsities"), s);
      if (!(sp >= 0.0 && sp <= 1.0))
        throw ConfigError("[bench] sparsities: " + s + " outside [0, 1]");
      c.bench_sparsities.push_back(sp);
    }
  }
  num("bench", "repeats", c.bench_repeats);
  if (c.bench_repeats < 3)
    throw ConfigError("[bench] repeats must be >= 3");
  num("bench", "seed", c.bench_seed);

  num("maps", "layer", c.maps_layer);
  num("maps", "count", c.maps_count);
  if (auto v = get("maps", "aggregate")) {
    if (*v == "mean")
      c.maps_aggregate = MapAggregate::mean;
    else if (*v == "max")
      c.maps_aggregate = MapAggregate::max;
    else
      throw ConfigError("[maps] aggregate: expected mean or max, got '" + *v + "'");
  }

  c.dataset_resolved = resolve_dataset(c.dataset, base_dir);
  return c;
}

ExperimentConfig load_config(const fs::path &path) {
  std::ifstream in(path);
  if (!in)
    throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path().empty() ? fs::path(".")
                                                           : path.parent_path());
}

std::string serialize_config(const ExperimentConfig &c) {
  std::ostringstream os;
  os << "[experiment]\n"
     << "model = " << c.model << '\n'
     << "dataset = " << c.dataset << '\n'
     << "output = " << c.output << '\n'
     << "eval_limit = " << c.eval_limit << "\n\n";
  os << "[pg]\n"
     << "bits = " << c.pg.bits << '\n'
     << "msb_bits = " << c.pg.msb_bits << '\n'
     << "sigma = " << text(c.pg.sigma) << '\n'
     << "delta_target = " << text(c.pg.delta_target) << '\n'
     << "alpha = " << text(c.pg.alpha) << '\n'
     << "mode = " << (c.pg.mode == ThresholdMode::learnable ? "learnable" : "fixed") << '\n'
     << "fixed_threshold = " << text(c.pg.fixed_threshold) << "\n\n";
  os << "[train]\n"
     << "batch_size = " << c.train.batch_size << '\n'
     << "epochs = " << c.train.epochs << '\n'
     << "lr = " << text(c.train.lr.initial) << '\n'
     << "lr_decay_epochs = " << join(c.train.lr.decay_epochs) << '\n'
     << "lr_decay_factor = " << text(c.train.lr.factor) << '\n'
     << "momentum = " << text(c.train.momentum) << '\n'
     << "weight_decay = " << text(c.train.weight_decay) << '\n'
     << "threshold_lr_scale = " << text(c.train.threshold_lr_scale) << '\n'
     << "seed = " << c.train.seed << '\n'
     << "sparse_backprop = " << (c.train.sparse_backprop ? "true" : "false") << '\n'
     << "train_limit = " << c.train.train_limit << "\n\n";
  os << "[sweep]\n"
     << "thresholds = " << join(c.sweep_thresholds) << "\n\n";
  os << "[bench]\ndims = ";
  for (std::size_t i = 0; i < c.bench_dims.size(); ++i)
    os << (i ? "," : "") << c.bench_dims[i].m << 'x' << c.bench_dims[i].k << 'x'
       << c.bench_dims[i].n;
  os << '\n'
     << "sparsities = " << join(c.bench_sparsities) << '\n'
     << "repeats = " << c.bench_repeats << '\n'
     << "seed = " << c.bench_seed << "\n\n";
  os << "[maps]\n"
     << "layer = " << c.maps_layer << '\n'
     << "count = " << c.maps_count << '\n'
     << "aggregate = " << (c.maps_aggregate == MapAggregate::mean ? "mean" : "max")
     << '\n';
  return os.str();
}

ModelSpec model_spec_for(const ExperimentConfig &c) {
  return c.model == "cnn" ? cnn_spec(c.pg) : mlp_spec(c.pg);
}

} // namespace pg

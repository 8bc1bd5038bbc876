#include "hvcl/config.hpp"

#include "hvcl/error.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

namespace hvcl {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) {
        return out;
    }
    std::string item;
    std::istringstream in(s + sep);
    while (std::getline(in, item, sep)) {
        item = trim(item);
        if (item.empty()) {
            throw ConfigError("empty entry in list '" + s + "'");
        }
        out.push_back(item);
    }
    return out;
}

std::string format_real(double v) {
    std::ostringstream out;
    out << std::setprecision(17) << v;
    return out.str();
}

double parse_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) {
            throw std::invalid_argument(value);
        }
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a real number, got '" + value + "'");
    }
}

std::uint64_t parse_uint(const std::string& key, const std::string& value) {
    std::uint64_t v = 0;
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, v);
    if (ec != std::errc() || ptr != end || value.empty()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
    }
    return v;
}

std::string join_sizes(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out += (i ? "," : "") + std::to_string(v[i]);
    }
    return out;
}

struct KeyHandler {
    std::function<std::string(const RunConfig&)> get;
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
};

#define REAL_KEY(field)                                                                       \
    KeyHandler {                                                                              \
        [](const RunConfig& c) { return format_real(c.field); },                              \
            [](RunConfig& c, const std::string& k, const std::string& v) { c.field = parse_real(k, v); } \
    }
#define UINT_KEY(field)                                                                       \
    KeyHandler {                                                                              \
        [](const RunConfig& c) { return std::to_string(c.field); },                           \
            [](RunConfig& c, const std::string& k, const std::string& v) {                    \
                c.field = static_cast<decltype(c.field)>(parse_uint(k, v));                   \
            }                                                                                 \
    }

const std::vector<std::pair<std::string, KeyHandler>>& registry() {
    static const std::vector<std::pair<std::string, KeyHandler>> keys = {
        {"scenario",
         {[](const RunConfig& c) { return std::string(to_string(c.scenario)); },
          [](RunConfig& c, const std::string&, const std::string& v) { c.scenario = scenario_from_string(v); }}},
        {"data.dir",
         {[](const RunConfig& c) { return c.data_dir.string(); },
          [](RunConfig& c, const std::string&, const std::string& v) { c.data_dir = v; }}},
        {"data.train_limit", UINT_KEY(train_limit)},
        {"data.test_limit", UINT_KEY(test_limit)},
        {"data.pairs",
         {[](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.split_pairs.size(); ++i) {
                  out += (i ? "," : "") + std::to_string(c.split_pairs[i].first) + "-" +
                         std::to_string(c.split_pairs[i].second);
              }
              return out;
          },
          [](RunConfig& c, const std::string& k, const std::string& v) {
              std::vector<ClassPair> pairs;
              for (const std::string& item : split(v, ',')) {
                  const auto dash = item.find('-');
                  if (dash == std::string::npos) {
                      throw ConfigError(k + ": pairs are written a-b, got '" + item + "'");
                  }
                  pairs.emplace_back(static_cast<int>(parse_uint(k, trim(item.substr(0, dash)))),
                                     static_cast<int>(parse_uint(k, trim(item.substr(dash + 1)))));
              }
              c.split_pairs = std::move(pairs);
          }}},
        {"data.permuted_tasks", UINT_KEY(permuted_tasks)},
        {"data.permutation_seed", UINT_KEY(permutation_seed)},
        {"data.synthetic_tasks", UINT_KEY(synthetic_tasks)},
        {"data.synthetic_per_task", UINT_KEY(synthetic_per_task)},
        {"data.synthetic_separation", REAL_KEY(synthetic_separation)},
        {"model.hidden",
         {[](const RunConfig& c) { return join_sizes(c.arch.hidden); },
          [](RunConfig& c, const std::string& k, const std::string& v) {
              std::vector<std::size_t> widths;
              for (const std::string& item : split(v, ',')) {
                  widths.push_back(parse_uint(k, item));
              }
              c.arch.hidden = std::move(widths);
          }}},
        {"model.experts", UINT_KEY(arch.experts)},
        {"model.k", UINT_KEY(arch.k)},
        {"model.init_std", REAL_KEY(arch.init.init_std)},
        {"model.prior_std", REAL_KEY(arch.init.prior_std)},
        {"train.mode",
         {[](const RunConfig& c) { return std::string(to_string(c.train.mode)); },
          [](RunConfig& c, const std::string&, const std::string& v) { c.train.mode = mode_from_string(v); }}},
        {"train.epochs", UINT_KEY(train.epochs)},
        {"train.batch_size", UINT_KEY(train.batch_size)},
        {"train.lr", REAL_KEY(train.learning_rate)},
        {"train.beta1", REAL_KEY(train.betas.gating_kl)},
        {"train.beta2", REAL_KEY(train.betas.weight_kl)},
        {"train.beta3", REAL_KEY(train.betas.entropy)},
        {"train.beta4", REAL_KEY(train.betas.diversity)},
        {"train.kernel_width", REAL_KEY(train.kernel_width)},
        {"train.jitter", REAL_KEY(train.jitter)},
        {"train.entropy_sign",
         {[](const RunConfig& c) { return std::string(to_string(c.train.entropy_sign)); },
          [](RunConfig& c, const std::string&, const std::string& v) {
              try {
                  c.train.entropy_sign = entropy_sign_from_string(v);
              } catch (const Error& e) {
                  throw ConfigError(e.what());
              }
          }}},
        {"train.kl_scaling",
         {[](const RunConfig& c) { return std::string(to_string(c.train.kl_scaling)); },
          [](RunConfig& c, const std::string&, const std::string& v) {
              c.train.kl_scaling = kl_scaling_from_string(v);
          }}},
        {"train.eval_threads", UINT_KEY(train.eval_threads)},
        {"run.seeds",
         {[](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.seeds.size(); ++i) {
                  out += (i ? "," : "") + std::to_string(c.seeds[i]);
              }
              return out;
          },
          [](RunConfig& c, const std::string& k, const std::string& v) {
              std::vector<std::uint64_t> seeds;
              for (const std::string& item : split(v, ',')) {
                  seeds.push_back(parse_uint(k, item));
              }
              c.seeds = std::move(seeds);
          }}},
        {"run.out",
         {[](const RunConfig& c) { return c.out_dir.string(); },
          [](RunConfig& c, const std::string&, const std::string& v) { c.out_dir = v; }}},
    };
    return keys;
}

#undef REAL_KEY
#undef UINT_KEY

const KeyHandler& resolve(std::string& key) {
    const auto& keys = registry();
    for (const auto& [name, handler] : keys) {
        if (name == key) {
            return handler;
        }
    }
    if (key.find('.') == std::string::npos) {
        const KeyHandler* match = nullptr;
        std::string full;
        for (const auto& [name, handler] : keys) {
            const auto dot = name.rfind('.');
            if (dot != std::string::npos && name.substr(dot + 1) == key) {
                if (match != nullptr) {
                    throw ConfigError("ambiguous key '" + key + "' (" + full + ", " + name + ")");
                }
                match = &handler;
                full = name;
            }
        }
        if (match != nullptr) {
            key = full;
            return *match;
        }
    }
    throw ConfigError("unknown configuration key '" + key + "'");
}

} // namespace

void RunConfig::validate() const {
    train.validate();
    if (seeds.empty()) {
        throw ConfigError("run.seeds must list at least one seed");
    }
    if (arch.experts == 0 || arch.k == 0 || arch.k > arch.experts) {
        throw ConfigError("model.k must lie in [1, model.experts]");
    }
    for (std::size_t w : arch.hidden) {
        if (w == 0) {
            throw ConfigError("model.hidden widths must be positive");
        }
    }
    if (!(arch.init.init_std > 0.0) || !(arch.init.prior_std > 0.0)) {
        throw ConfigError("model.init_std and model.prior_std must be positive");
    }
    if (scenario == Scenario::permuted && permuted_tasks == 0) {
        throw ConfigError("data.permuted_tasks must be positive");
    }
    if (scenario == Scenario::synthetic &&
        (synthetic_tasks == 0 || synthetic_per_task < 2 || !(synthetic_separation > 0.0))) {
        throw ConfigError("synthetic stream needs tasks >= 1, per_task >= 2 and separation > 0");
    }
    if (scenario == Scenario::split && split_pairs.empty()) {
        throw ConfigError("data.pairs must list at least one pair");
    }
}

ConfigEntries config_entries(const RunConfig& config) {
    ConfigEntries out;
    for (const auto& [name, handler] : registry()) {
        out.emplace_back(name, handler.get(config));
    }
    return out;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
    std::string full = trim(key);
    const KeyHandler& handler = resolve(full);
    handler.set(config, full, trim(value));
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
            }
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        }
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) {
            key = section + "." + key;
        }
        try {
            apply_setting(config, key, line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read config file " + path.string());
    }
    std::ostringstream text;
    text << in.rdbuf();
    RunConfig config;
    apply_config_text(config, text.str(), path.string());
    return config;
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) {
        throw ConfigError("override '" + assignment + "' is not key=value");
    }
    apply_setting(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

std::string config_to_text(const RunConfig& config) {
    std::string out;
    for (const auto& [k, v] : config_entries(config)) {
        out += k + " = " + v + "\n";
    }
    return out;
}

TaskStream build_stream(const RunConfig& config, std::uint64_t seed) {
    TaskStream stream;
    switch (config.scenario) {
    case Scenario::synthetic:
        return make_synthetic_stream(config.synthetic_tasks, config.synthetic_per_task, config.synthetic_separation,
                                     seed);
    case Scenario::split: {
        const DatasetSplits data = load_mnist(config.data_dir);
        stream = make_split_tasks(data, config.split_pairs);
        break;
    }
    case Scenario::permuted: {
        DatasetSplits data = load_mnist(config.data_dir);
        // trim before permuting: permuting 60k rows per task is the expensive part
        data.train = take_rows(data.train, config.train_limit);
        data.test = take_rows(data.test, config.test_limit);
        const std::uint64_t perm_seed = config.permutation_seed != 0 ? config.permutation_seed : seed;
        return make_permuted_tasks(data, config.permuted_tasks, perm_seed);
    }
    }
    for (Task& task : stream.tasks) {
        task.train = take_rows(task.train, config.train_limit);
        task.test = take_rows(task.test, config.test_limit);
    }
    return stream;
}

} // namespace hvcl

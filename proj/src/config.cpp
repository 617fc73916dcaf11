#include "spacte/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace spacte {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::string env_name(const std::string& key) {
    std::string out = "SPACTE_";
    for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(c));
    return out;
}

class KeyMap {
  public:
    void set(const std::string& key, const std::string& value) { values_[key] = value; }

    void apply_env() {
        // Every known key may be overridden via SPACTE_SECTION_KEY.
        for (const std::string& key : known_keys()) {
            if (const char* v = std::getenv(env_name(key).c_str())) values_[key] = v;
        }
    }

    bool has(const std::string& key) {
        consumed_.insert(key);
        return values_.count(key) > 0;
    }

    std::string raw(const std::string& key) {
        consumed_.insert(key);
        return values_.at(key);
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return;
        parse_value(key, it->second, out);
    }

    void get_bool(const std::string& key, bool& out) {
        consumed_.insert(key);
        auto it = values_.find(key);
        if (it == values_.end()) return;
        const std::string v = it->second;
        if (v == "true" || v == "1")
            out = true;
        else if (v == "false" || v == "0")
            out = false;
        else
            throw ConfigError(key + ": expected true/false, got '" + v + "'");
    }

    void reject_unknown() const {
        for (const auto& [key, value] : values_)
            if (!consumed_.count(key)) throw ConfigError("unknown key: " + key);
    }

    static const std::vector<std::string>& known_keys();

  private:
    static void parse_value(const std::string& key, const std::string& v, double& out) {
        try {
            std::size_t pos = 0;
            out = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
        } catch (...) {
            throw ConfigError(key + ": expected a number, got '" + v + "'");
        }
    }
    static void parse_value(const std::string& key, const std::string& v, int& out) {
        try {
            std::size_t pos = 0;
            out = std::stoi(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
        } catch (...) {
            throw ConfigError(key + ": expected an integer, got '" + v + "'");
        }
    }
    static void parse_value(const std::string& key, const std::string& v, long long& out) {
        try {
            std::size_t pos = 0;
            out = std::stoll(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
        } catch (...) {
            throw ConfigError(key + ": expected an integer, got '" + v + "'");
        }
    }
    static void parse_value(const std::string& key, const std::string& v,
                            std::uint64_t& out) {
        try {
            std::size_t pos = 0;
            out = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
        } catch (...) {
            throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
        }
    }
    static void parse_value(const std::string&, const std::string& v, std::string& out) {
        out = v;
    }
    static void parse_value(const std::string& key, const std::string& v,
                            std::optional<double>& out) {
        double d = 0.0;
        parse_value(key, v, d);
        out = d;
    }
    static void parse_value(const std::string& key, const std::string& v,
                            std::vector<int>& out) {
        out.clear();
        std::stringstream ss(v);
        std::string item;
        while (std::getline(ss, item, ',')) {
            int x = 0;
            parse_value(key, trim(item), x);
            out.push_back(x);
        }
        if (out.empty()) throw ConfigError(key + ": expected a comma-separated int list");
    }

    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

const std::vector<std::string>& KeyMap::known_keys() {
    static const std::vector<std::string> keys = {
        "arch.preset", "arch.heads", "arch.classes", "arch.split", "arch.mlp.widths",
        "arch.input.channels", "arch.input.height", "arch.input.width",
        "noise.sigma",
        "train.epochs", "train.batch", "train.m", "train.epsilon", "train.variant",
        "train.c1", "train.c2", "train.c3", "train.attack_steps",
        "train.attack_step_size", "train.circular_teaching", "train.lambda_ini",
        "train.lambda_lst", "train.lr", "train.lr_decay", "train.lr_period",
        "train.momentum", "train.nesterov", "train.weight_decay",
        "train.normalized_cosine", "train.augment", "train.checkpoint_every",
        "seed",
        "certify.n0", "certify.n", "certify.alpha", "certify.batch", "certify.stride",
        "certify.max_examples", "certify.workers",
        "data.kind", "data.path", "data.blobs.dim", "data.blobs.count",
        "data.blobs.test_count", "data.blobs.separation", "data.blobs.sigma",
        "out.dir",
    };
    return keys;
}

void require(bool cond, const std::string& msg) {
    if (!cond) throw ConfigError(msg);
}

}  // namespace

double RunConfig::lambda_ini_value() const {
    return lambda_ini ? *lambda_ini : std::log(static_cast<double>(classes));
}

VariantKind RunConfig::variant_kind() const {
    if (variant == "gaussian") return VariantKind::Gaussian;
    if (variant == "consistency") return VariantKind::Consistency;
    if (variant == "smoothmix") return VariantKind::SmoothMix;
    throw ConfigError("train.variant: expected gaussian/consistency/smoothmix");
}

ArchitectureSpec RunConfig::make_arch(int input_dim) const {
    if (arch_preset == "mlp") {
        const int s = split >= 0 ? split : 2 * (static_cast<int>(mlp_widths.size()) / 2);
        return mlp_spec(input_dim, classes, heads, mlp_widths, s);
    }
    if (arch_preset == "conv-small")
        return conv_small_spec({in_channels, in_height, in_width}, classes, heads, split);
    if (arch_preset == "resnet110") {
        ArchitectureSpec spec = resnet110_cifar_spec(heads, split != 0);
        if (split >= 0) spec.split_index = split;
        return spec;
    }
    throw ConfigError("arch.preset: expected mlp/conv-small/resnet110");
}

RunConfig parse_and_validate(const std::string& text, bool apply_env) {
    KeyMap map;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        require(eq != std::string::npos,
                "line " + std::to_string(line_no) + ": expected key = value");
        map.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    if (apply_env) map.apply_env();

    RunConfig c;
    map.get("arch.preset", c.arch_preset);
    map.get("arch.heads", c.heads);
    map.get("arch.classes", c.classes);
    map.get("arch.split", c.split);
    map.get("arch.mlp.widths", c.mlp_widths);
    map.get("arch.input.channels", c.in_channels);
    map.get("arch.input.height", c.in_height);
    map.get("arch.input.width", c.in_width);
    map.get("noise.sigma", c.sigma);
    map.get("train.epochs", c.epochs);
    map.get("train.batch", c.batch);
    map.get("train.m", c.m);
    map.get("train.epsilon", c.epsilon);
    map.get("train.variant", c.variant);
    map.get("train.c1", c.c1);
    map.get("train.c2", c.c2);
    map.get("train.c3", c.c3);
    map.get("train.attack_steps", c.attack_steps);
    map.get("train.attack_step_size", c.attack_step_size);
    map.get_bool("train.circular_teaching", c.circular_teaching);
    map.get("train.lambda_ini", c.lambda_ini);
    map.get("train.lambda_lst", c.lambda_lst);
    map.get("train.lr", c.lr);
    map.get("train.lr_decay", c.lr_decay);
    map.get("train.lr_period", c.lr_period);
    map.get("train.momentum", c.momentum);
    map.get_bool("train.nesterov", c.nesterov);
    map.get("train.weight_decay", c.weight_decay);
    map.get_bool("train.normalized_cosine", c.normalized_cosine);
    map.get_bool("train.augment", c.augment);
    map.get("train.checkpoint_every", c.checkpoint_every);
    map.get("seed", c.seed);
    map.get("certify.n0", c.n0);
    map.get("certify.n", c.n_samples);
    map.get("certify.alpha", c.alpha);
    map.get("certify.batch", c.certify_batch);
    map.get("certify.stride", c.stride);
    map.get("certify.max_examples", c.max_examples);
    map.get("certify.workers", c.workers);
    map.get("data.kind", c.data_kind);
    map.get("data.path", c.data_path);
    map.get("data.blobs.dim", c.blobs_dim);
    map.get("data.blobs.count", c.blobs_count);
    map.get("data.blobs.test_count", c.blobs_test_count);
    map.get("data.blobs.separation", c.blobs_separation);
    map.get("data.blobs.sigma", c.blobs_sigma);
    map.get("out.dir", c.out_dir);
    map.reject_unknown();

    require(c.sigma.has_value(), "noise.sigma required");
    require(*c.sigma >= 0.0, "noise.sigma: must be >= 0");
    require(c.heads >= 1, "arch.heads: must be >= 1");
    require(c.classes >= 2, "arch.classes: must be >= 2");
    require(c.epochs >= 0, "train.epochs: must be >= 0");
    require(c.batch >= 1, "train.batch: must be >= 1");
    require(c.m >= 1, "train.m: must be >= 1");
    require(c.epsilon > 0.0 && c.epsilon < 1.0, "train.epsilon: must lie in (0,1)");
    c.variant_kind();  // validates the string
    require(c.c1 >= 0.0 && c.c2 >= 0.0 && c.c3 >= 0.0,
            "train.c1/c2/c3: must be >= 0");
    require(c.attack_steps >= 0, "train.attack_steps: must be >= 0");
    require(c.lr > 0.0, "train.lr: must be > 0");
    require(c.lr_decay > 0.0 && c.lr_decay <= 1.0, "train.lr_decay: must lie in (0,1]");
    require(c.lr_period >= 1, "train.lr_period: must be >= 1");
    require(c.weight_decay >= 0.0, "train.weight_decay: must be >= 0");
    if (c.variant == "consistency")
        require(c.m >= 2, "train.m: consistency variant needs m >= 2");
    if (c.circular_teaching && c.epochs > 0)
        require(c.lambda_lst.has_value(),
                "train.lambda_lst required when train.circular_teaching = true");
    require(c.n0 >= 1, "certify.n0: must be >= 1");
    require(c.n_samples >= 1, "certify.n: must be >= 1");
    require(c.alpha > 0.0 && c.alpha < 1.0, "certify.alpha: must lie in (0,1)");
    require(c.certify_batch >= 1, "certify.batch: must be >= 1");
    require(c.stride >= 1, "certify.stride: must be >= 1");
    require(c.workers >= 1, "certify.workers: must be >= 1");
    require(c.data_kind == "blobs" || c.data_kind == "cifar10",
            "data.kind: expected blobs or cifar10");
    require(c.blobs_dim >= 1 && c.blobs_count >= 1 && c.blobs_test_count >= 1,
            "data.blobs.*: counts and dim must be >= 1");
    require(c.blobs_separation > 0.0, "data.blobs.separation: must be > 0");
    require(c.blobs_sigma > 0.0, "data.blobs.sigma: must be > 0");
    return c;
}

RunConfig parse_config_file(const std::string& path, bool apply_env) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_and_validate(ss.str(), apply_env);
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

std::string render(const RunConfig& c) {
    std::ostringstream os;
    os << "arch.preset = " << c.arch_preset << "\n";
    os << "arch.heads = " << c.heads << "\n";
    os << "arch.classes = " << c.classes << "\n";
    os << "arch.split = " << c.split << "\n";
    os << "arch.mlp.widths = ";
    for (std::size_t i = 0; i < c.mlp_widths.size(); ++i)
        os << (i ? "," : "") << c.mlp_widths[i];
    os << "\n";
    os << "arch.input.channels = " << c.in_channels << "\n";
    os << "arch.input.height = " << c.in_height << "\n";
    os << "arch.input.width = " << c.in_width << "\n";
    if (c.sigma) os << "noise.sigma = " << fmt(*c.sigma) << "\n";
    os << "train.epochs = " << c.epochs << "\n";
    os << "train.batch = " << c.batch << "\n";
    os << "train.m = " << c.m << "\n";
    os << "train.epsilon = " << fmt(c.epsilon) << "\n";
    os << "train.variant = " << c.variant << "\n";
    os << "train.c1 = " << fmt(c.c1) << "\n";
    os << "train.c2 = " << fmt(c.c2) << "\n";
    os << "train.c3 = " << fmt(c.c3) << "\n";
    os << "train.attack_steps = " << c.attack_steps << "\n";
    os << "train.attack_step_size = " << fmt(c.attack_step_size) << "\n";
    os << "train.circular_teaching = " << (c.circular_teaching ? "true" : "false") << "\n";
    if (c.lambda_ini) os << "train.lambda_ini = " << fmt(*c.lambda_ini) << "\n";
    if (c.lambda_lst) os << "train.lambda_lst = " << fmt(*c.lambda_lst) << "\n";
    os << "train.lr = " << fmt(c.lr) << "\n";
    os << "train.lr_decay = " << fmt(c.lr_decay) << "\n";
    os << "train.lr_period = " << c.lr_period << "\n";
    os << "train.momentum = " << fmt(c.momentum) << "\n";
    os << "train.nesterov = " << (c.nesterov ? "true" : "false") << "\n";
    os << "train.weight_decay = " << fmt(c.weight_decay) << "\n";
    os << "train.normalized_cosine = " << (c.normalized_cosine ? "true" : "false") << "\n";
    os << "train.augment = " << (c.augment ? "true" : "false") << "\n";
    os << "train.checkpoint_every = " << c.checkpoint_every << "\n";
    os << "seed = " << c.seed << "\n";
    os << "certify.n0 = " << c.n0 << "\n";
    os << "certify.n = " << c.n_samples << "\n";
    os << "certify.alpha = " << fmt(c.alpha) << "\n";
    os << "certify.batch = " << c.certify_batch << "\n";
    os << "certify.stride = " << c.stride << "\n";
    os << "certify.max_examples = " << c.max_examples << "\n";
    os << "certify.workers = " << c.workers << "\n";
    os << "data.kind = " << c.data_kind << "\n";
    os << "data.path = " << c.data_path << "\n";
    os << "data.blobs.dim = " << c.blobs_dim << "\n";
    os << "data.blobs.count = " << c.blobs_count << "\n";
    os << "data.blobs.test_count = " << c.blobs_test_count << "\n";
    os << "data.blobs.separation = " << fmt(c.blobs_separation) << "\n";
    os << "data.blobs.sigma = " << fmt(c.blobs_sigma) << "\n";
    os << "out.dir = " << c.out_dir << "\n";
    return os.str();
}

std::string defaults_text() {
    RunConfig c;
    std::string body = render(c);
    return "# noise.sigma = <required: 0.25 | 0.5 | 1.0>\n" + body;
}

std::uint64_t config_hash(const RunConfig& cfg) {
    // The hash guards checkpoint/resume compatibility, so ignore settings
    // that cannot change numerical results.
    RunConfig canon = cfg;
    canon.out_dir = RunConfig{}.out_dir;
    canon.workers = RunConfig{}.workers;
    const std::string s = render(canon);
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace spacte

#include "rforge/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rforge {

namespace {

std::string trim(const std::string& s) {
    const std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            const std::string t = trim(cur);
            if (!t.empty()) out.push_back(t);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    const std::string t = trim(cur);
    if (!t.empty()) out.push_back(t);
    return out;
}

[[noreturn]] void fail(const std::string& origin, int line, const std::string& msg) {
    std::ostringstream os;
    os << origin << ":" << line << ": " << msg;
    throw std::invalid_argument(os.str());
}

struct Parser {
    const std::string& origin;
    int line = 0;

    double to_double(const std::string& v) const {
        try {
            std::size_t pos = 0;
            const double d = std::stod(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return d;
        } catch (const std::exception&) {
            fail(origin, line, "expected a number, got '" + v + "'");
        }
    }

    int to_int(const std::string& v) const {
        try {
            std::size_t pos = 0;
            const long d = std::stol(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return static_cast<int>(d);
        } catch (const std::exception&) {
            fail(origin, line, "expected an integer, got '" + v + "'");
        }
    }

    std::uint64_t to_u64(const std::string& v) const {
        try {
            std::size_t pos = 0;
            const unsigned long long d = std::stoull(v, &pos);
            if (pos != v.size()) throw std::invalid_argument("");
            return d;
        } catch (const std::exception&) {
            fail(origin, line, "expected a non-negative integer, got '" + v + "'");
        }
    }
};

}  // namespace

ExperimentConfig ExperimentConfig::from_string(const std::string& text,
                                               const std::string& origin) {
    ExperimentConfig cfg;
    bool saw_lp_threshold = false;
    bool saw_lp_rate = false;
    bool saw_shaping_m_refs = false;

    Parser p{origin};
    std::istringstream in(text);
    std::string raw;
    while (std::getline(in, raw)) {
        ++p.line;
        std::string line = raw;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            fail(origin, p.line, "expected key=value, got '" + trim(raw) + "'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) fail(origin, p.line, "empty key");
        if (value.empty()) fail(origin, p.line, "empty value for '" + key + "'");

        if (key == "env.vocab_size") cfg.env.vocab_size = p.to_int(value);
        else if (key == "env.max_len") cfg.env.max_len = p.to_int(value);
        else if (key == "env.num_prompts") cfg.env.num_prompts = p.to_int(value);
        else if (key == "env.hack_threshold") cfg.env.hack_threshold = p.to_double(value);
        else if (key == "env.exploit_weight") cfg.env.exploit_weight = p.to_double(value);
        else if (key == "env.noise_std") cfg.env.noise_std = p.to_double(value);
        else if (key == "env.seed") cfg.env.seed = p.to_u64(value);
        else if (key == "env.gold_scale") cfg.env.gold_scale = p.to_double(value);
        else if (key == "env.target_count") cfg.env.target_count = p.to_int(value);
        else if (key == "env.redundancy_rate") cfg.env.redundancy_rate = p.to_double(value);
        else if (key == "env.proxy_bias") cfg.env.proxy_bias = p.to_double(value);
        else if (key == "shaping.method") cfg.methods = {value};
        else if (key == "shaping.m_refs") {
            cfg.shaping.m_refs = p.to_int(value);
            saw_shaping_m_refs = true;
        }
        else if (key == "shaping.k") cfg.shaping.k = p.to_double(value);
        else if (key == "shaping.ceiling") cfg.shaping.ceiling = p.to_double(value);
        else if (key == "shaping.shift") cfg.shaping.shift = p.to_double(value);
        else if (key == "shaping.z_percentile") cfg.shaping.z_percentile = p.to_double(value);
        else if (key == "ppo.epsilon") cfg.ppo.epsilon = p.to_double(value);
        else if (key == "ppo.lambda_gae") cfg.ppo.lambda_gae = p.to_double(value);
        else if (key == "ppo.gamma") cfg.ppo.gamma = p.to_double(value);
        else if (key == "ppo.eta_kl") cfg.ppo.eta_kl = p.to_double(value);
        else if (key == "ppo.buffer_size") cfg.ppo.buffer_size = p.to_int(value);
        else if (key == "ppo.policy_lr") cfg.ppo.policy_lr = p.to_double(value);
        else if (key == "ppo.critic_lr") cfg.ppo.critic_lr = p.to_double(value);
        else if (key == "ppo.value_clip_delta") cfg.ppo.value_clip_delta = p.to_double(value);
        else if (key == "ppo.length_penalty_threshold") {
            cfg.ppo.length_penalty_threshold = p.to_int(value);
            saw_lp_threshold = true;
        }
        else if (key == "ppo.length_penalty_rate") {
            cfg.ppo.length_penalty_rate = p.to_double(value);
            saw_lp_rate = true;
        }
        else if (key == "ppo.m_refs") cfg.ppo.m_refs = p.to_int(value);
        else if (key == "ppo.steps") cfg.ppo.steps = p.to_int(value);
        else if (key == "ppo.eval_interval") cfg.ppo.eval_interval = p.to_int(value);
        else if (key == "ppo.eval_samples") cfg.ppo.eval_samples = p.to_int(value);
        else if (key == "ppo.winrate_samples") cfg.ppo.winrate_samples = p.to_int(value);
        else if (key == "ppo.stats_warmup") cfg.ppo.stats_warmup = p.to_int(value);
        else if (key == "ppo.group_size") cfg.ppo.group_size = p.to_int(value);
        else if (key == "ppo.grad_clip") cfg.ppo.grad_clip = p.to_double(value);
        else if (key == "policy.temperature") cfg.ppo.sampling.temperature = p.to_double(value);
        else if (key == "policy.top_k") cfg.ppo.sampling.top_k = p.to_int(value);
        else if (key == "policy.top_p") cfg.ppo.sampling.top_p = p.to_double(value);
        else if (key == "dpo.beta") cfg.dpo.beta = p.to_double(value);
        else if (key == "dpo.lr") cfg.dpo.lr = p.to_double(value);
        else if (key == "dpo.steps") cfg.dpo.steps = p.to_int(value);
        else if (key == "dpo.eval_interval") cfg.dpo.eval_interval = p.to_int(value);
        else if (key == "dpo.eval_samples") cfg.dpo.eval_samples = p.to_int(value);
        else if (key == "dpo.winrate_samples") cfg.dpo.winrate_samples = p.to_int(value);
        else if (key == "run.algo") cfg.algo = value;
        else if (key == "run.methods") cfg.methods = split_list(value);
        else if (key == "run.out_dir") cfg.out_dir = value;
        else if (key == "run.seeds") {
            cfg.seeds.clear();
            for (const std::string& s : split_list(value)) cfg.seeds.push_back(p.to_u64(s));
        }
        else fail(origin, p.line, "unknown key '" + key + "'");
    }

    // ppo.m_refs doubles as the default reference count when shaping.m_refs
    // is not given.
    if (!saw_shaping_m_refs) cfg.shaping.m_refs = cfg.ppo.m_refs;

    // Length penalty scaled to the toy horizon unless pinned explicitly:
    // threshold at three quarters of max_len, maximum penalty about a tenth
    // of the gold range.
    if (!saw_lp_threshold) {
        cfg.ppo.length_penalty_threshold = (cfg.env.max_len * 3) / 4;
    }
    if (!saw_lp_rate) {
        const int excess = std::max(1, cfg.env.max_len - cfg.ppo.length_penalty_threshold);
        cfg.ppo.length_penalty_rate = 0.1 * cfg.env.gold_scale / static_cast<double>(excess);
    }

    cfg.dpo.sampling = cfg.ppo.sampling;
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open config file '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str(), path);
}

ShapingSpec ExperimentConfig::shaping_for(const std::string& method_name) const {
    ShapingSpec spec = shaping;
    spec.method = parse_shaping_method(method_name);
    spec.validate();
    return spec;
}

void ExperimentConfig::validate() const {
    env.validate();
    if (algo != "ppo" && algo != "grpo" && algo != "dpo") {
        throw std::invalid_argument("run.algo must be ppo, grpo or dpo");
    }
    if (algo == "dpo") {
        dpo.validate();
    } else {
        ppo.validate();
        if (methods.empty()) throw std::invalid_argument("run.methods must be non-empty");
        for (const std::string& m : methods) {
            shaping_for(m);  // validates the method name and parameters
        }
    }
    if (seeds.empty()) throw std::invalid_argument("run.seeds must be non-empty");
    std::vector<std::uint64_t> sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw std::invalid_argument("run.seeds must be distinct");
    }
    std::vector<std::string> ms = methods;
    std::sort(ms.begin(), ms.end());
    if (std::adjacent_find(ms.begin(), ms.end()) != ms.end()) {
        throw std::invalid_argument("run.methods must be distinct");
    }
    if (out_dir.empty()) throw std::invalid_argument("run.out_dir must be non-empty");
}

}  // namespace rforge

#include <fstream>
#include <stdexcept>

#include "abkt/toy_model.hpp"
#include "json.hpp"

namespace abkt {

namespace {

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
    return json{{"vocab_size", c.vocab_size}, {"model_dim", c.model_dim},
                {"head_dim", c.head_dim},     {"n_heads", c.n_heads},
                {"n_layers", c.n_layers},     {"max_context", c.max_context},
                {"train_base", c.train_base}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.model_dim = j.at("model_dim").get<int>();
    c.head_dim = j.at("head_dim").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.max_context = j.at("max_context").get<int>();
    c.train_base = j.at("train_base").get<double>();
    return c;
}

}  // namespace

void save_checkpoint(const ModelParams& p, const std::string& path) {
    std::ofstream bin(path, std::ios::binary | std::ios::trunc);
    if (!bin) {
        throw std::runtime_error("save_checkpoint: cannot open " + path);
    }
    json tensors = json::array();
    visit_params(const_cast<ModelParams&>(p),
                 [&](const std::string& name, double* data, Eigen::Index n) {
                     bin.write(reinterpret_cast<const char*>(data),
                               static_cast<std::streamsize>(n) *
                                   static_cast<std::streamsize>(sizeof(double)));
                     tensors.push_back(json{{"name", name}, {"size", n}});
                 });
    if (!bin) {
        throw std::runtime_error("save_checkpoint: write failed for " + path);
    }
    bin.close();

    json side{{"format", "abkt-checkpoint-v1"},
              {"dtype", "float64-native"},
              {"config", config_to_json(p.config)},
              {"tensors", tensors},
              {"total_params", param_count(p)}};
    std::ofstream js(path + ".json", std::ios::trunc);
    if (!js) {
        throw std::runtime_error("save_checkpoint: cannot open " + path + ".json");
    }
    js << side.dump(2) << "\n";
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream js(path + ".json");
    if (!js) {
        throw std::runtime_error("load_checkpoint: missing sidecar " + path + ".json");
    }
    json side = json::parse(js);
    if (side.at("format").get<std::string>() != "abkt-checkpoint-v1") {
        throw std::runtime_error("load_checkpoint: unknown format in " + path + ".json");
    }
    ModelParams p = init_params(config_from_json(side.at("config")), 0);

    std::ifstream bin(path, std::ios::binary);
    if (!bin) {
        throw std::runtime_error("load_checkpoint: cannot open " + path);
    }
    const auto& tensors = side.at("tensors");
    size_t idx = 0;
    visit_params(p, [&](const std::string& name, double* data, Eigen::Index n) {
        if (idx >= tensors.size() || tensors[idx].at("name") != name ||
            tensors[idx].at("size").get<Eigen::Index>() != n) {
            throw std::runtime_error("load_checkpoint: tensor layout mismatch at " + name);
        }
        bin.read(reinterpret_cast<char*>(data),
                 static_cast<std::streamsize>(n) *
                     static_cast<std::streamsize>(sizeof(double)));
        ++idx;
    });
    if (!bin) {
        throw std::runtime_error("load_checkpoint: truncated parameter file " + path);
    }
    return p;
}

}  // namespace abkt

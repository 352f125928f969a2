#include "grlb/nn.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "grlb/common.hpp"

namespace grlb {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Tensor he_conv(std::vector<int> shape, Rng& rng) {
    const float fan_in = static_cast<float>(shape[1]) * shape[2] * shape[3];
    return Tensor::randn(std::move(shape), rng, std::sqrt(2.0f / fan_in), true);
}

Tensor xavier_linear(std::vector<int> shape, Rng& rng) {
    const float fan_in = static_cast<float>(shape[0]);
    return Tensor::randn(std::move(shape), rng, std::sqrt(1.0f / fan_in), true);
}

}  // namespace

ScoreModel::ScoreModel(ArchDescriptor arch, uint64_t init_seed) : arch_(std::move(arch)) {
    if (arch_.widths.size() != 3) throw DataError("score model: expects 3 resolution levels");
    for (int w : arch_.widths)
        if (w % arch_.groups != 0)
            throw DataError("score model: level width not divisible by norm groups");
    Rng rng(init_seed);
    const int w0 = arch_.widths[0], w1 = arch_.widths[1], w2 = arch_.widths[2];
    const int td = arch_.temb_dim;

    auto add = [&](const std::string& name, Tensor t) {
        index_[name] = params_.size();
        params_.emplace_back(name, std::move(t));
    };
    // Each block conditions on t multiplicatively and additively
    // (FiLM-style adaptive normalization): GN(conv(x)) * (1 + scale(e)) +
    // shift(e). The multiplicative path lets the net express t-dependent
    // gains on its input, which pure shifts cannot.
    auto add_block = [&](const std::string& prefix, int cin, int cout) {
        add(prefix + ".conv.w", he_conv({cout, cin, 3, 3}, rng));
        add(prefix + ".conv.b", Tensor::zeros({cout}, true));
        add(prefix + ".gn.g", Tensor::full({cout}, 1.0f, true));
        add(prefix + ".gn.b", Tensor::zeros({cout}, true));
        add(prefix + ".scale.w", xavier_linear({td, cout}, rng));
        add(prefix + ".scale.b", Tensor::zeros({cout}, true));
        add(prefix + ".shift.w", xavier_linear({td, cout}, rng));
        add(prefix + ".shift.b", Tensor::zeros({cout}, true));
    };

    add("stem.w", he_conv({w0, arch_.in_channels, 3, 3}, rng));
    add("stem.b", Tensor::zeros({w0}, true));
    add("temb.fc1.w", xavier_linear({td, td}, rng));
    add("temb.fc1.b", Tensor::zeros({td}, true));
    add("temb.fc2.w", xavier_linear({td, td}, rng));
    add("temb.fc2.b", Tensor::zeros({td}, true));
    add_block("enc0", w0, w0);
    add_block("enc1", w0, w1);
    add_block("enc2", w1, w2);
    add("mid.conv.w", he_conv({w2, w2, 3, 3}, rng));
    add("mid.conv.b", Tensor::zeros({w2}, true));
    add("mid.gn.g", Tensor::full({w2}, 1.0f, true));
    add("mid.gn.b", Tensor::zeros({w2}, true));
    add_block("dec1", w2 + w1, w1);
    add_block("dec0", w1 + w0, w0);
    // The head also sees the raw model input, so linear-in-x structure
    // does not have to survive the normalization stack.
    // Zero-init: the denoiser starts as the zero predictor.
    add("head.w", Tensor::zeros({arch_.out_channels, w0 + arch_.in_channels, 3, 3}, true));
    add("head.b", Tensor::zeros({arch_.out_channels}, true));
}

const Tensor& ScoreModel::p(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DataError("score model: missing parameter " + name);
    return params_[it->second].second;
}

int64_t ScoreModel::param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : params_) n += t.numel();
    return n;
}

void ScoreModel::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

Tensor ScoreModel::forward(const Tensor& x, const std::vector<int>& t) const {
    const auto& s = x.shape();
    if (s.size() != 4 || s[1] != arch_.in_channels)
        throw ShapeError("score model: input channels mismatch");
    if (s[2] % 4 != 0 || s[3] % 4 != 0)
        throw ShapeError("score model: H and W must be divisible by 4");
    if (static_cast<int>(t.size()) != s[0])
        throw ShapeError("score model: need one timestep per example");

    // Sinusoidal timestep features, then a 2-layer MLP shared by all levels.
    const int td = arch_.temb_dim;
    const int half = td / 2;
    Tensor temb({s[0], td});
    auto te = temb.mutable_data();
    for (int n = 0; n < s[0]; ++n) {
        for (int k = 0; k < half; ++k) {
            const double freq = std::exp(-std::log(10000.0) * k / std::max(1, half - 1));
            te[static_cast<int64_t>(n) * td + k] = static_cast<float>(std::sin(t[n] * freq));
            te[static_cast<int64_t>(n) * td + half + k] =
                static_cast<float>(std::cos(t[n] * freq));
        }
    }
    Tensor e = ops::silu(ops::linear(temb, p("temb.fc1.w"), p("temb.fc1.b")));
    e = ops::silu(ops::linear(e, p("temb.fc2.w"), p("temb.fc2.b")));

    auto block = [&](const std::string& prefix, const Tensor& in) {
        Tensor y = ops::conv2d(in, p(prefix + ".conv.w"), p(prefix + ".conv.b"));
        y = ops::group_norm(y, p(prefix + ".gn.g"), p(prefix + ".gn.b"), arch_.groups);
        Tensor scale = ops::add_scalar(
            ops::linear(e, p(prefix + ".scale.w"), p(prefix + ".scale.b")), 1.0f);
        y = ops::mul_channel(y, scale);
        y = ops::add_channel(y, ops::linear(e, p(prefix + ".shift.w"), p(prefix + ".shift.b")));
        return ops::silu(y);
    };

    Tensor s0 = ops::conv2d(x, p("stem.w"), p("stem.b"));
    Tensor x0 = block("enc0", s0);
    Tensor x1 = block("enc1", ops::avg_pool2(x0));
    Tensor x2 = block("enc2", ops::avg_pool2(x1));
    Tensor m = ops::silu(ops::group_norm(ops::conv2d(x2, p("mid.conv.w"), p("mid.conv.b")),
                                         p("mid.gn.g"), p("mid.gn.b"), arch_.groups));
    Tensor y1 = block("dec1", ops::concat_channels({ops::upsample2(m), x1}));
    Tensor y0 = block("dec0", ops::concat_channels({ops::upsample2(y1), x0}));
    return ops::conv2d(ops::concat_channels({y0, x}), p("head.w"), p("head.b"));
}

namespace {

constexpr char kMagic[5] = {'G', 'R', 'L', 'B', '1'};

void put_u32(std::ofstream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

json arch_to_json(const ArchDescriptor& a) {
    return json{{"in_channels", a.in_channels}, {"out_channels", a.out_channels},
                {"base_width", a.base_width},   {"widths", a.widths},
                {"temb_dim", a.temb_dim},       {"groups", a.groups}};
}

ArchDescriptor arch_from_json(const json& j) {
    ArchDescriptor a;
    a.in_channels = j.at("in_channels").get<int>();
    a.out_channels = j.at("out_channels").get<int>();
    a.base_width = j.at("base_width").get<int>();
    a.widths = j.at("widths").get<std::vector<int>>();
    a.temb_dim = j.at("temb_dim").get<int>();
    a.groups = j.at("groups").get<int>();
    return a;
}

void write_tensor_container(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& tensors) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    put_u32(out, static_cast<uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(out, static_cast<uint32_t>(t.shape().size()));
        for (int d : t.shape()) put_u32(out, static_cast<uint32_t>(d));
        static_assert(sizeof(float) == 4);
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.numel() * 4));
    }
    if (!out) throw DataError("short write on checkpoint: " + path);
}

std::vector<std::pair<std::string, Tensor>> read_tensor_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[5];
    in.read(magic, 5);
    if (!in || std::memcmp(magic, kMagic, 5) != 0)
        throw DataError("bad checkpoint magic in " + path);
    const uint32_t count = get_u32(in);
    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const uint32_t rank = get_u32(in);
        std::vector<int> shape(rank);
        int64_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            shape[d] = static_cast<int>(get_u32(in));
            numel *= shape[d];
        }
        std::vector<float> data(numel);
        in.read(reinterpret_cast<char*>(data.data()), numel * 4);
        if (!in) throw DataError("truncated checkpoint: " + path);
        out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const ScoreModel& model, const Adam* adam,
                     const Rng* rng, int64_t step, const ScheduleParams& schedule) {
    std::vector<std::pair<std::string, Tensor>> tensors = model.params();
    if (adam) {
        const auto& ps = adam->params();
        for (size_t i = 0; i < ps.size(); ++i) {
            tensors.emplace_back("opt/m/" + ps[i].first,
                                 Tensor(ps[i].second.shape(), adam->m()[i]));
            tensors.emplace_back("opt/v/" + ps[i].first,
                                 Tensor(ps[i].second.shape(), adam->v()[i]));
        }
    }
    // Atomic: write temp files, then rename both.
    const std::string tmp = path + ".tmp";
    write_tensor_container(tmp, tensors);

    json side;
    side["format"] = "grlb-checkpoint/1";
    side["arch"] = arch_to_json(model.arch());
    side["step"] = step;
    if (adam) {
        side["optimizer"] = {{"type", "adam"},
                             {"step", adam->step_count()},
                             {"lr", adam->config().lr},
                             {"beta1", adam->config().beta1},
                             {"beta2", adam->config().beta2},
                             {"eps", adam->config().eps},
                             {"tensors", "opt/"}};
    }
    if (rng) side["rng"] = {{"key", rng->key()}, {"counter", rng->counter()}};
    side["schedule"] = {{"T", schedule.T}, {"beta_min", schedule.beta_min},
                        {"beta_max", schedule.beta_max}};
    const std::string side_tmp = path + ".json.tmp";
    {
        std::ofstream out(side_tmp);
        if (!out) throw DataError("cannot write checkpoint sidecar: " + side_tmp);
        out << side.dump(2) << "\n";
    }
    fs::rename(tmp, path);
    fs::rename(side_tmp, path + ".json");
}

Checkpoint load_checkpoint(const std::string& path) {
    Checkpoint ck;
    ck.tensors = read_tensor_container(path);
    std::ifstream side(path + ".json");
    if (!side) throw DataError("missing checkpoint sidecar: " + path + ".json");
    json j;
    side >> j;
    if (j.at("format").get<std::string>() != "grlb-checkpoint/1")
        throw DataError("unsupported checkpoint format in " + path);
    ck.arch = arch_from_json(j.at("arch"));
    ck.step = j.at("step").get<int64_t>();
    if (j.contains("optimizer")) {
        ck.has_optimizer = true;
        const auto& o = j.at("optimizer");
        ck.adam_step = o.at("step").get<int64_t>();
        ck.adam.lr = o.at("lr").get<float>();
        ck.adam.beta1 = o.at("beta1").get<float>();
        ck.adam.beta2 = o.at("beta2").get<float>();
        ck.adam.eps = o.at("eps").get<float>();
    }
    if (j.contains("rng")) {
        ck.has_rng = true;
        ck.rng_key = j.at("rng").at("key").get<uint64_t>();
        ck.rng_counter = j.at("rng").at("counter").get<uint64_t>();
    }
    if (j.contains("schedule")) {
        ck.schedule.T = j.at("schedule").at("T").get<int>();
        ck.schedule.beta_min = j.at("schedule").at("beta_min").get<float>();
        ck.schedule.beta_max = j.at("schedule").at("beta_max").get<float>();
    }
    return ck;
}

GradCheckReport grad_check_model(const ScoreModel& model, const Tensor& x,
                                 const std::vector<int>& t, const Tensor& target,
                                 double tolerance, Rng& rng, int min_coords) {
    if (model.param_count() > 10000)
        throw DataError("grad_check: model too large (" + std::to_string(model.param_count()) +
                        " > 1e4 parameters)");
    std::vector<Tensor> params;
    for (const auto& [name, p] : model.params()) params.push_back(p);
    auto loss_fn = [&] { return ops::mse(model.forward(x, t), target); };
    return grad_check(params, loss_fn, tolerance, rng, min_coords);
}

ScoreModel model_from_checkpoint(const Checkpoint& ck) {
    ScoreModel model(ck.arch, /*init_seed=*/0);
    size_t loaded = 0;
    for (auto& [name, param] : model.params()) {
        bool found = false;
        for (const auto& [cname, ct] : ck.tensors) {
            if (cname == name) {
                if (ct.shape() != param.shape())
                    throw DataError("checkpoint tensor shape mismatch for " + name);
                std::copy(ct.data().begin(), ct.data().end(), param.mutable_data().begin());
                found = true;
                loaded++;
                break;
            }
        }
        if (!found) throw DataError("checkpoint missing tensor " + name);
    }
    (void)loaded;
    return model;
}

}  // namespace grlb

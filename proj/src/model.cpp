#include "camc/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "camc/errors.hpp"
#include "camc/entropy_model.hpp"

namespace camc {

// ---- configuration -----------------------------------------------------------

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper() {
    ModelConfig c;
    c.name = "paper";
    c.channels = {128, 192, 256, 320};
    c.depths = {3, 2, 2};
    c.window = 8;
    c.k_clusters = 64;
    c.latent_channels = 320;
    c.hyper_channels = 192;
    c.head_dim = 32;
    return c;
}

ModelConfig ModelConfig::preset(const std::string& name) {
    if (name == "desk") return desk();
    if (name == "paper") return paper();
    throw ConfigError("unknown config preset '" + name + "' (expected desk or paper)");
}

std::size_t ModelConfig::heads_for(std::size_t ch) const {
    if (head_dim == 0 || ch < head_dim || ch % head_dim != 0) return 1;
    return ch / head_dim;
}

void ModelConfig::validate() const {
    for (std::size_t c : channels)
        if (c == 0) throw ConfigError("channel widths must be positive");
    for (std::size_t d : depths)
        if (d == 0) throw ConfigError("stage depths must be positive");
    if (window == 0) throw ConfigError("window must be positive");
    if (k_clusters == 0) throw ConfigError("k_clusters must be positive");
    if (d_s == 0) throw ConfigError("d_s must be positive");
    if (latent_channels == 0 || hyper_channels == 0) throw ConfigError("latent/hyper channels must be positive");
    if (kmeans_iters == 0) throw ConfigError("kmeans_iters must be positive");
    if (!(ema_decay >= 0.0f && ema_decay <= 1.0f)) throw ConfigError("ema_decay must lie in [0, 1]");
}

namespace {

template <std::size_t N>
std::string join(const std::array<std::size_t, N>& v) {
    std::string s;
    for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos == 0 || pos != value.size() || value[0] == '-')
        throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
    return static_cast<std::size_t>(v);
}

template <std::size_t N>
std::array<std::size_t, N> parse_list(const std::string& key, const std::string& value) {
    std::vector<std::string> items;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) items.push_back(item);
    if (items.size() != N)
        throw ConfigError("config key '" + key + "': expected " + std::to_string(N) + " comma-separated integers");
    std::array<std::size_t, N> out{};
    for (std::size_t i = 0; i < N; ++i) out[i] = parse_size(key, items[i]);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

std::string ModelConfig::to_text() const {
    std::ostringstream o;
    o << "name=" << name << "\n";
    o << "channels=" << join(channels) << "\n";
    o << "depths=" << join(depths) << "\n";
    o << "window=" << window << "\n";
    o << "k_clusters=" << k_clusters << "\n";
    o << "d_s=" << d_s << "\n";
    o << "latent_channels=" << latent_channels << "\n";
    o << "hyper_channels=" << hyper_channels << "\n";
    o << "head_dim=" << head_dim << "\n";
    o << "kmeans_iters=" << kmeans_iters << "\n";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(ema_decay));
    o << "ema_decay=" << buf << "\n";
    return o.str();
}

// A `preset=` line (if any) picks the base values; later keys override.
ModelConfig ModelConfig::parse(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    ModelConfig c;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key == "preset") {
            c = preset(value);
            continue;
        }
        entries.emplace_back(std::move(key), std::move(value));
    }
    for (const auto& [key, value] : entries) {
        if (key == "name") c.name = value;
        else if (key == "channels") c.channels = parse_list<4>(key, value);
        else if (key == "depths") c.depths = parse_list<3>(key, value);
        else if (key == "window") c.window = parse_size(key, value);
        else if (key == "k_clusters") c.k_clusters = parse_size(key, value);
        else if (key == "d_s") c.d_s = parse_size(key, value);
        else if (key == "latent_channels") c.latent_channels = parse_size(key, value);
        else if (key == "hyper_channels") c.hyper_channels = parse_size(key, value);
        else if (key == "head_dim") c.head_dim = parse_size(key, value);
        else if (key == "kmeans_iters") c.kmeans_iters = parse_size(key, value);
        else if (key == "ema_decay") {
            char* end = nullptr;
            const real v = std::strtof(value.c_str(), &end);
            if (value.empty() || *end != '\0') throw ConfigError("config key 'ema_decay': not a number");
            c.ema_decay = v;
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    if (c.name.empty() || c.name.find_first_of(" \t\n=") != std::string::npos)
        throw ConfigError("config name must be a non-empty word");
    c.validate();
    return c;
}

std::uint16_t ModelConfig::id() const {
    std::uint32_t h = 2166136261u;  // FNV-1a
    for (unsigned char ch : to_text()) {
        h ^= ch;
        h *= 16777619u;
    }
    return static_cast<std::uint16_t>((h >> 16) ^ (h & 0xffffu));
}

// ---- parameters ----------------------------------------------------------------

std::size_t ParamStore::add(std::string name, Tensor value) {
    if (index_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    const std::size_t i = values_.size();
    index_.emplace(name, i);
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return i;
}

std::optional<std::size_t> ParamStore::find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t ParamStore::count_scalars() const {
    std::size_t n = 0;
    for (const auto& v : values_) n += v.numel();
    return n;
}

std::vector<ad::Var> ParamStore::bind(ad::Tape& tape, bool requires_grad) const {
    std::vector<ad::Var> out;
    out.reserve(values_.size());
    for (const auto& v : values_) out.push_back(tape.leaf(v, requires_grad));
    return out;
}

// ---- construction -----------------------------------------------------------------

namespace {

class Builder {
public:
    Builder(ParamStore& store, std::uint64_t seed) : store_(store), rng_(seed) {}

    std::size_t uniform(const std::string& name, Shape shape, std::size_t fan_in, real gain = 1.0f) {
        Tensor t(std::move(shape));
        const real bound = gain / std::sqrt(static_cast<real>(std::max<std::size_t>(fan_in, 1)));
        std::uniform_real_distribution<real> dist(-bound, bound);
        for (auto& v : t.data()) v = dist(rng_);
        return store_.add(name, std::move(t));
    }
    std::size_t constant(const std::string& name, Shape shape, real value) {
        return store_.add(name, Tensor(std::move(shape), value));
    }
    std::size_t tensor(const std::string& name, Tensor t) { return store_.add(name, std::move(t)); }

    LayerNormIx norm(const std::string& prefix, std::size_t d) {
        return {constant(prefix + ".gamma", {d}, 1.0f), constant(prefix + ".beta", {d}, 0.0f)};
    }

    ConvIx conv(const std::string& name, std::size_t cin, std::size_t cout, int k, int stride, real gain = 1.0f) {
        const std::size_t ku = static_cast<std::size_t>(k);
        ConvIx c{};
        c.w = uniform(name + ".w", {ku, ku, cin, cout}, ku * ku * cin, gain);
        c.b = constant(name + ".b", {cout}, 0.0f);
        c.stride = stride;
        c.pad = k / 2;
        c.out_pad = 0;
        c.transposed = false;
        return c;
    }
    ConvIx tconv(const std::string& name, std::size_t cin, std::size_t cout, int k, real gain = 1.0f) {
        const std::size_t ku = static_cast<std::size_t>(k);
        ConvIx c{};
        // Each output pixel sees about k²/4 taps of a stride-2 transposed conv.
        c.w = uniform(name + ".w", {cin, ku, ku, cout}, std::max<std::size_t>(ku * ku * cin / 4, 1), gain);
        c.b = constant(name + ".b", {cout}, 0.0f);
        c.stride = 2;
        c.pad = k / 2;
        c.out_pad = 1;
        c.transposed = true;
        return c;
    }

    std::mt19937_64& rng() { return rng_; }

private:
    ParamStore& store_;
    std::mt19937_64 rng_;
};

Tensor random_unit_rows(std::size_t k, std::size_t d, std::mt19937_64& rng) {
    std::normal_distribution<real> n(0.0f, 1.0f);
    Tensor t({k, d});
    for (std::size_t r = 0; r < k; ++r) {
        double norm2 = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            t.at(r, c) = n(rng);
            norm2 += double(t.at(r, c)) * t.at(r, c);
        }
        const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
        if (inv == 0.0) t.at(r, r % d) = 1.0f;
        for (std::size_t c = 0; c < d && inv != 0.0; ++c) t.at(r, c) = static_cast<real>(t.at(r, c) * inv);
    }
    return t;
}

}  // namespace

Model Model::create(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config_ = config;
    Builder b(m.params_, seed);
    const auto& ch = config.channels;
    const std::size_t stage_ch[6] = {ch[0], ch[1], ch[2], ch[2], ch[1], ch[0]};
    const std::size_t stage_depth[6] = {config.depths[0], config.depths[1], config.depths[2],
                                        config.depths[2], config.depths[1], config.depths[0]};

    m.down_[0] = b.conv("enc.down1", 3, ch[0], 5, 2);
    m.down_[1] = b.conv("enc.down2", ch[0], ch[1], 5, 2);
    m.down_[2] = b.conv("enc.down3", ch[1], ch[2], 5, 2);
    // Larger gain on the last analysis layer so an untrained model already
    // spreads its latents over several quantization bins.
    m.down_[3] = b.conv("enc.down4", ch[2], config.latent_channels, 5, 2, 4.0f);

    m.up_[0] = b.tconv("dec.up1", config.latent_channels, ch[2], 5);
    m.up_[1] = b.tconv("dec.up2", ch[2], ch[1], 5);
    m.up_[2] = b.tconv("dec.up3", ch[1], ch[0], 5);
    m.up_[3] = b.tconv("dec.up4", ch[0], 3, 5);

    for (int s = 0; s < 6; ++s) {
        StageIx& st = m.stages_[s];
        st.number = s + 1;
        st.channels = stage_ch[s];
        const std::size_t d = stage_ch[s];
        const std::size_t hidden = 2 * d;
        const std::string side = s < 3 ? "enc" : "dec";
        for (std::size_t u = 0; u < stage_depth[s]; ++u) {
            const std::string pre = side + ".s" + std::to_string(s + 1) + ".u" + std::to_string(u);
            UnitIx unit{};
            AttentionIx& a = unit.attn;
            a.norm = b.norm(pre + ".attn.norm", d);
            a.qkv_w = b.uniform(pre + ".attn.qkv.w", {d, 3 * d}, d);
            a.qkv_b = b.constant(pre + ".attn.qkv.b", {3 * d}, 0.0f);
            a.proj_w = b.uniform(pre + ".attn.proj.w", {d, d}, d);
            a.proj_b = b.constant(pre + ".attn.proj.b", {d}, 0.0f);
            a.heads = config.heads_for(d);

            if (s >= 2 && s <= 4) {
                CamIx c{};
                c.norm = b.norm(pre + ".cam.norm", d);
                SsmParams sp = SsmParams::init(d, config.d_s, b.rng());
                c.delta_w = b.tensor(pre + ".cam.ssm.delta.w", std::move(sp.delta_w));
                c.delta_b = b.tensor(pre + ".cam.ssm.delta.b", std::move(sp.delta_b));
                c.b_w = b.tensor(pre + ".cam.ssm.b.w", std::move(sp.b_w));
                c.c_w = b.tensor(pre + ".cam.ssm.c.w", std::move(sp.c_w));
                c.a_log = b.tensor(pre + ".cam.ssm.a_log", std::move(sp.a_log));
                c.skip = b.tensor(pre + ".cam.ssm.skip", std::move(sp.skip));
                c.dict = b.uniform(pre + ".cam.dict", {config.k_clusters, config.d_s}, config.d_s, 0.1f);
                c.gate_w = b.uniform(pre + ".cam.gate.w", {d, d}, d);
                c.gate_b = b.constant(pre + ".cam.gate.b", {d}, 0.0f);
                c.out_w = b.uniform(pre + ".cam.out.w", {d, d}, d);
                c.out_b = b.constant(pre + ".cam.out.b", {d}, 0.0f);
                c.cluster = m.clusters_.size();
                NamedCluster nc;
                nc.name = pre + ".cam";
                nc.model.centers = random_unit_rows(config.k_clusters, d, b.rng());
                nc.model.iters = config.kmeans_iters;
                nc.model.ema_decay = config.ema_decay;
                m.clusters_.push_back(std::move(nc));
                unit.cam = c;
            }

            FfnIx& f = unit.ffn;
            f.norm = b.norm(pre + ".ffn.norm", d);
            f.expand_w = b.uniform(pre + ".ffn.expand.w", {d, hidden}, d);
            f.expand_b = b.constant(pre + ".ffn.expand.b", {hidden}, 0.0f);
            f.dw_w = b.uniform(pre + ".ffn.dw.w", {3, 3, hidden}, 9);
            f.dw_b = b.constant(pre + ".ffn.dw.b", {hidden}, 0.0f);
            f.project_w = b.uniform(pre + ".ffn.project.w", {hidden, d}, hidden);
            f.project_b = b.constant(pre + ".ffn.project.b", {d}, 0.0f);
            st.units.push_back(unit);
        }
    }

    const std::size_t lc = config.latent_channels, hc = config.hyper_channels;
    m.hyper_enc_[0] = b.conv("hyper.enc0", lc, hc, 3, 1);
    m.hyper_enc_[1] = b.conv("hyper.enc1", hc, hc, 5, 2);
    m.hyper_enc_[2] = b.conv("hyper.enc2", hc, hc, 5, 2);
    m.hyper_dec_[0] = b.tconv("hyper.dec0", hc, hc, 5);
    m.hyper_dec_[1] = b.tconv("hyper.dec1", hc, hc, 5);
    m.hyper_dec_[2] = b.conv("hyper.dec2", hc, 2 * lc, 3, 1);

    m.prior_loc_ = b.constant("prior.loc", {hc}, 0.0f);
    // softplus(0.55) ≈ 1.0
    m.prior_scale_ = b.constant("prior.scale_raw", {hc}, 0.55f);
    return m;
}

const StageIx& Model::stage(int number) const {
    if (number < 1 || number > 6) throw ConfigError("stage must be 1..6, got " + std::to_string(number));
    return stages_[static_cast<std::size_t>(number - 1)];
}

bool Model::stage_has_cam(int number) const {
    const StageIx& s = stage(number);
    return !s.units.empty() && s.units.front().cam.has_value();
}

// ---- forward pass ------------------------------------------------------------------

ModelPass::ModelPass(Model& model, ad::Tape& tape, bool requires_grad, bool training)
    : model_(model), tape_(tape), training_(training), vars_(model.params().bind(tape, requires_grad)) {}

ModelPass::ModelPass(Model& model, ad::Tape& tape, std::vector<ad::Var> vars, bool training)
    : model_(model), tape_(tape), training_(training), vars_(std::move(vars)) {
    if (vars_.size() != model.params().size())
        throw ContractError("ModelPass needs one variable per parameter (" + std::to_string(model.params().size()) +
                            "), got " + std::to_string(vars_.size()));
    for (std::size_t i = 0; i < vars_.size(); ++i)
        if (vars_[i].shape() != model.params().value(i).shape())
            throw DimensionError("variable for " + model.params().name(i) + " has the wrong shape");
}

ad::Var ModelPass::conv(const ConvIx& c, ad::Var x) {
    if (c.transposed) return ad::conv_transpose2d(x, p(c.w), p(c.b), c.stride, c.pad, c.out_pad);
    return ad::conv2d(x, p(c.w), p(c.b), c.stride, c.pad);
}

AttentionVars ModelPass::attention(const AttentionIx& ix) const {
    return {{p(ix.norm.gamma), p(ix.norm.beta)}, p(ix.qkv_w), p(ix.qkv_b), p(ix.proj_w), p(ix.proj_b), ix.heads};
}

FfnVars ModelPass::ffn(const FfnIx& ix) const {
    return {{p(ix.norm.gamma), p(ix.norm.beta)}, p(ix.expand_w), p(ix.expand_b), p(ix.dw_w),
            p(ix.dw_b), p(ix.project_w), p(ix.project_b)};
}

CamVars ModelPass::cam(const CamIx& ix) const {
    CamVars v;
    v.norm = {p(ix.norm.gamma), p(ix.norm.beta)};
    v.ssm = {p(ix.delta_w), p(ix.delta_b), p(ix.b_w), p(ix.c_w), p(ix.a_log), p(ix.skip)};
    v.dict = p(ix.dict);
    v.gate_w = p(ix.gate_w);
    v.gate_b = p(ix.gate_b);
    v.out_w = p(ix.out_w);
    v.out_b = p(ix.out_b);
    return v;
}

ad::Var ModelPass::stage(int number, ad::Var x) {
    const StageIx& st = model_.stage(number);
    if (x.value().rank() != 3 || x.value().dim(2) != st.channels)
        throw DimensionError("stage " + std::to_string(number) + " expects " + std::to_string(st.channels) +
                             " channels, got " + shape_str(x.value().shape()));
    const std::size_t window = model_.config().window;
    for (std::size_t u = 0; u < st.units.size(); ++u) {
        const UnitIx& unit = st.units[u];
        x = window_attention(x, attention(unit.attn), window);
        if (unit.cam) {
            const CamIx& ci = *unit.cam;
            CamVars cv = cam(ci);
            NamedCluster& nc = model_.clusters()[ci.cluster];
            if (training_ && !nc.initialized) {
                ad::NoGradGuard guard(tape_);
                const std::size_t n = x.value().dim(0) * x.value().dim(1);
                ad::Var normed = ad::layer_norm(ad::reshape(x, {n, st.channels}), cv.norm.gamma, cv.norm.beta);
                if (n >= nc.model.k())
                    nc.model = init_centers(normed.value(), nc.model.k(), nc.model.iters, nc.model.ema_decay);
                nc.initialized = true;
            }
            AssignmentObserver obs;
            if (observer_)
                obs = [this, number, u](const AssignmentVector& g, std::size_t h, std::size_t w) {
                    observer_(number, u, g, h, w);
                };
            x = cam_block(x, cv, nc.model, training_, obs);
        }
        x = conv_ffn(x, ffn(unit.ffn));
    }
    return x;
}

ad::Var ModelPass::analysis(ad::Var image) {
    const Tensor& v = image.value();
    if (v.rank() != 3 || v.dim(2) != 3) throw DimensionError("analysis expects an H×W×3 image");
    if (v.dim(0) % 16 != 0 || v.dim(1) % 16 != 0 || v.dim(0) == 0 || v.dim(1) == 0)
        throw DimensionError("analysis input extents must be positive multiples of 16, got " + shape_str(v.shape()));
    ad::Var x = conv(model_.down()[0], image);
    x = stage(1, x);
    x = conv(model_.down()[1], x);
    x = stage(2, x);
    x = conv(model_.down()[2], x);
    x = stage(3, x);
    return conv(model_.down()[3], x);
}

ad::Var ModelPass::synthesis(ad::Var latent) {
    const Tensor& v = latent.value();
    if (v.rank() != 3 || v.dim(2) != model_.config().latent_channels)
        throw DimensionError("synthesis expects H×W×" + std::to_string(model_.config().latent_channels) +
                             " latent, got " + shape_str(v.shape()));
    ad::Var x = conv(model_.up()[0], latent);
    x = stage(4, x);
    x = conv(model_.up()[1], x);
    x = stage(5, x);
    x = conv(model_.up()[2], x);
    x = stage(6, x);
    return conv(model_.up()[3], x);
}

ad::Var ModelPass::hyper_encode(ad::Var latent) {
    const Tensor& v = latent.value();
    if (v.rank() != 3 || v.dim(2) != model_.config().latent_channels)
        throw DimensionError("hyper encoder expects the latent map, got " + shape_str(v.shape()));
    ad::Var x = ad::gelu(conv(model_.hyper_enc()[0], latent));
    x = ad::gelu(conv(model_.hyper_enc()[1], x));
    return conv(model_.hyper_enc()[2], x);
}

GaussianVars ModelPass::hyper_decode(ad::Var z_hat, std::size_t latent_h, std::size_t latent_w) {
    const Tensor& v = z_hat.value();
    if (v.rank() != 3 || v.dim(2) != model_.config().hyper_channels)
        throw DimensionError("hyper decoder expects the side latent, got " + shape_str(v.shape()));
    ad::Var x = ad::gelu(conv(model_.hyper_dec()[0], z_hat));
    x = ad::gelu(conv(model_.hyper_dec()[1], x));
    x = conv(model_.hyper_dec()[2], x);
    if (x.value().dim(0) < latent_h || x.value().dim(1) < latent_w)
        throw DimensionError("side latent too small for the requested latent extents");
    x = crop(x, latent_h, latent_w);
    const std::size_t lc = model_.config().latent_channels;
    const std::size_t n = latent_h * latent_w;
    ad::Var flat = ad::reshape(x, {n, 2 * lc});
    ad::Var mu = ad::reshape(ad::slice_cols(flat, 0, lc), {latent_h, latent_w, lc});
    ad::Var raw = ad::reshape(ad::slice_cols(flat, lc, 2 * lc), {latent_h, latent_w, lc});
    return {mu, ad::lower_bound(ad::softplus(raw), kScaleFloor)};
}

ad::Var ModelPass::prior_loc() { return p(model_.prior_loc()); }

ad::Var ModelPass::prior_scale() { return ad::lower_bound(ad::softplus(p(model_.prior_scale())), kScaleFloor); }

// ---- padding / cropping ----------------------------------------------------------------

namespace {

std::size_t mirror(std::size_t i, std::size_t n) {
    if (n == 1) return 0;
    const std::size_t period = 2 * n - 2;
    const std::size_t m = i % period;
    return m < n ? m : period - m;
}

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

std::vector<std::int64_t> pad_index(std::size_t h, std::size_t w, std::size_t hp, std::size_t wp) {
    std::vector<std::int64_t> idx(hp * wp);
    for (std::size_t y = 0; y < hp; ++y)
        for (std::size_t x = 0; x < wp; ++x)
            idx[y * wp + x] = static_cast<std::int64_t>(mirror(y, h) * w + mirror(x, w));
    return idx;
}

std::vector<std::int64_t> crop_index(std::size_t w, std::size_t ch, std::size_t cw) {
    std::vector<std::int64_t> idx(ch * cw);
    for (std::size_t y = 0; y < ch; ++y)
        for (std::size_t x = 0; x < cw; ++x) idx[y * cw + x] = static_cast<std::int64_t>(y * w + x);
    return idx;
}

void require_map(const Shape& s, const char* what) {
    if (s.size() != 3 || s[0] == 0 || s[1] == 0)
        throw DimensionError(std::string(what) + " expects a non-empty H×W×C map, got " + shape_str(s));
}

Tensor gather_pixels(const Tensor& src, const std::vector<std::int64_t>& idx, std::size_t h, std::size_t w) {
    const std::size_t c = src.dim(2);
    Tensor out({h, w, c});
    for (std::size_t i = 0; i < idx.size(); ++i)
        std::copy_n(src.ptr() + static_cast<std::size_t>(idx[i]) * c, c, out.ptr() + i * c);
    return out;
}

}  // namespace

Tensor pad_to_multiple(const Tensor& image, std::size_t multiple) {
    require_map(image.shape(), "pad_to_multiple");
    const std::size_t h = image.dim(0), w = image.dim(1);
    const std::size_t hp = round_up(h, multiple), wp = round_up(w, multiple);
    if (hp == h && wp == w) return image;
    return gather_pixels(image, pad_index(h, w, hp, wp), hp, wp);
}

ad::Var pad_to_multiple(ad::Var image, std::size_t multiple) {
    const Shape s = image.shape();
    require_map(s, "pad_to_multiple");
    const std::size_t h = s[0], w = s[1], c = s[2];
    const std::size_t hp = round_up(h, multiple), wp = round_up(w, multiple);
    if (hp == h && wp == w) return image;
    const auto idx = pad_index(h, w, hp, wp);
    return ad::reshape(ad::gather_rows(ad::reshape(image, {h * w, c}), idx), {hp, wp, c});
}

Tensor crop(const Tensor& map, std::size_t h, std::size_t w) {
    require_map(map.shape(), "crop");
    if (h > map.dim(0) || w > map.dim(1)) throw DimensionError("crop larger than the map");
    if (h == map.dim(0) && w == map.dim(1)) return map;
    return gather_pixels(map, crop_index(map.dim(1), h, w), h, w);
}

ad::Var crop(ad::Var map, std::size_t h, std::size_t w) {
    const Shape s = map.shape();
    require_map(s, "crop");
    if (h > s[0] || w > s[1]) throw DimensionError("crop larger than the map");
    if (h == s[0] && w == s[1]) return map;
    const auto idx = crop_index(s[1], h, w);
    return ad::reshape(ad::gather_rows(ad::reshape(map, {s[0] * s[1], s[2]}), idx), {h, w, s[2]});
}

// ---- tensor-level conveniences -----------------------------------------------------------

Tensor analysis_transform(const Tensor& image, Model& model) {
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    ModelPass pass(model, tape, false, false);
    return pass.analysis(tape.constant(image)).value();
}

Tensor synthesis_transform(const Tensor& latent, Model& model, std::size_t out_h, std::size_t out_w) {
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    ModelPass pass(model, tape, false, false);
    return crop(pass.synthesis(tape.constant(latent)).value(), out_h, out_w);
}

Tensor hyper_encoder(const Tensor& latent, Model& model) {
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    ModelPass pass(model, tape, false, false);
    return pass.hyper_encode(tape.constant(latent)).value();
}

std::pair<Tensor, Tensor> hyper_decoder(const Tensor& z_hat, Model& model, std::size_t latent_h,
                                        std::size_t latent_w) {
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    ModelPass pass(model, tape, false, false);
    GaussianVars g = pass.hyper_decode(tape.constant(z_hat), latent_h, latent_w);
    return {g.mu.value(), g.sigma.value()};
}

}  // namespace camc

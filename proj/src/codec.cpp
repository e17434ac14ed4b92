#include "camc/codec.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "camc/entropy_model.hpp"
#include "camc/errors.hpp"
#include "camc/image_io.hpp"

namespace camc {
namespace {

constexpr char kMagic[4] = {'C', 'A', 'M', 'C'};

std::size_t half_up(std::size_t n) { return (n + 1) / 2; }

std::size_t symbol_index(int s) { return static_cast<std::size_t>(s - kSymbolMin); }

Tensor clamp01(Tensor t) {
    for (auto& v : t.data()) v = std::clamp(v, real(0), real(1));
    return t;
}

}  // namespace

std::vector<std::uint8_t> CodedFile::serialize() const {
    io::Writer w;
    w.raw(std::string(kMagic, 4));
    w.u8(kCodedFileVersion);
    w.u32(height);
    w.u32(width);
    w.u16(config_id);
    w.u32(static_cast<std::uint32_t>(z_payload.size()));
    w.bytes(z_payload);
    w.u32(static_cast<std::uint32_t>(y_payload.size()));
    w.bytes(y_payload);
    return std::move(w.buffer());
}

CodedFile CodedFile::parse(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 5) throw FormatError("coded file too short");
    if (!std::equal(kMagic, kMagic + 4, bytes.begin())) throw FormatError("not a coded image (bad magic)");
    if (bytes[4] != kCodedFileVersion) throw FormatError("unsupported coded file version " + std::to_string(bytes[4]));
    io::Reader<DecodeError> r(bytes.subspan(5));
    CodedFile f;
    f.height = r.u32();
    f.width = r.u32();
    f.config_id = r.u16();
    auto z = r.bytes(r.u32());
    f.z_payload.assign(z.begin(), z.end());
    auto y = r.bytes(r.u32());
    f.y_payload.assign(y.begin(), y.end());
    if (r.remaining() != 0) throw DecodeError("trailing bytes after coded payloads");
    if (f.height == 0 || f.width == 0) throw DecodeError("coded image has zero extent");
    return f;
}

std::pair<std::size_t, std::size_t> latent_extents(std::size_t height, std::size_t width) {
    return {(height + 15) / 16, (width + 15) / 16};
}

std::pair<std::size_t, std::size_t> side_extents(std::size_t latent_h, std::size_t latent_w) {
    return {half_up(half_up(latent_h)), half_up(half_up(latent_w))};
}

LatentModel latent_model(const Tensor& z_hat, Model& model, std::size_t latent_h, std::size_t latent_w) {
    LatentModel lm;
    std::tie(lm.mu, lm.sigma) = hyper_decoder(z_hat, model, latent_h, latent_w);
    lm.tables.reserve(lm.sigma.numel());
    lm.pmfs.reserve(lm.sigma.numel());
    for (real s : lm.sigma.data()) {
        lm.pmfs.push_back(gaussian_pmf_table(s));
        lm.tables.push_back(build_cdf(lm.pmfs.back()));
    }
    return lm;
}

SideModel side_model(const Model& model) {
    const Tensor& loc = model.params().value(model.prior_loc());
    const Tensor& raw = model.params().value(model.prior_scale());
    // Same floored softplus as the training graph, evaluated on a scratch tape.
    ad::Tape tape;
    ad::NoGradGuard guard(tape);
    const Tensor scale = ad::lower_bound(ad::softplus(tape.constant(raw)), kScaleFloor).value();
    SideModel sm;
    for (std::size_t c = 0; c < loc.numel(); ++c) {
        sm.pmfs.push_back(gaussian_pmf_table(scale[c], loc[c]));
        sm.tables.push_back(build_cdf(sm.pmfs.back()));
    }
    return sm;
}

EncodeResult encode_image(const Tensor& image, Model& model) {
    if (image.rank() != 3 || image.dim(2) != 3) throw InputError("expected an H×W×3 image");
    const std::size_t h = image.dim(0), w = image.dim(1);
    if (h == 0 || w == 0) throw InputError("image has zero extent");
    if (h > 0xffffffffu || w > 0xffffffffu) throw InputError("image too large");

    const Tensor padded = pad_to_multiple(image, 16);
    const Tensor y = analysis_transform(padded, model);
    const Tensor z = hyper_encoder(y, model);
    const std::size_t lh = y.dim(0), lw = y.dim(1), zc = z.dim(2);

    EncodeResult res;
    EncodeStats& st = res.stats;
    st.height = h;
    st.width = w;

    // Side latent under the factorized prior (μ = 0 → ẑ = round(z)).
    const SideModel sm = side_model(model);
    Tensor z_hat(z.shape());
    std::vector<std::size_t> z_sym(z.numel());
    std::vector<CdfTable> z_tables(z.numel());
    std::vector<double> z_probs(z.numel());
    for (std::size_t i = 0; i < z.numel(); ++i) {
        bool sat = false;
        const int s = to_symbol(z[i], &sat);
        st.saturated += sat;
        z_hat[i] = static_cast<real>(s);
        z_sym[i] = symbol_index(s);
        z_tables[i] = sm.tables[i % zc];
        z_probs[i] = sm.pmfs[i % zc][z_sym[i]];
    }

    const LatentModel lm = latent_model(z_hat, model, lh, lw);
    Tensor y_hat(y.shape());
    std::vector<std::size_t> y_sym(y.numel());
    std::vector<double> y_probs(y.numel());
    for (std::size_t i = 0; i < y.numel(); ++i) {
        bool sat = false;
        const int s = to_symbol(double(y[i]) - double(lm.mu[i]), &sat);
        st.saturated += sat;
        y_hat[i] = static_cast<real>(s) + lm.mu[i];
        y_sym[i] = symbol_index(s);
        y_probs[i] = lm.pmfs[i][y_sym[i]];
    }

    CodedFile f;
    f.height = static_cast<std::uint32_t>(h);
    f.width = static_cast<std::uint32_t>(w);
    f.config_id = model.config().id();
    f.z_payload = rc_encode(z_sym, z_tables);
    f.y_payload = rc_encode(y_sym, lm.tables);
    res.file = f.serialize();

    st.z_symbols = z.numel();
    st.y_symbols = y.numel();
    st.z_rate_bits = rate_bits(z_probs);
    st.y_rate_bits = rate_bits(y_probs);
    st.rate_estimate_bits = st.z_rate_bits + st.y_rate_bits;
    st.file_bytes = res.file.size();
    st.bpp = 8.0 * double(st.file_bytes) / double(h * w);

    res.reconstruction = clamp01(synthesis_transform(y_hat, model, h, w));
    return res;
}

Tensor decode_image(std::span<const std::uint8_t> file, Model& model) {
    const CodedFile f = CodedFile::parse(file);
    if (f.config_id != model.config().id())
        throw FormatError("coded file was produced with a different model configuration");
    const auto [lh, lw] = latent_extents(f.height, f.width);
    const auto [zh, zw] = side_extents(lh, lw);
    const std::size_t zc = model.config().hyper_channels;
    const std::size_t lc = model.config().latent_channels;

    const SideModel sm = side_model(model);
    std::vector<CdfTable> z_tables(zh * zw * zc);
    for (std::size_t i = 0; i < z_tables.size(); ++i) z_tables[i] = sm.tables[i % zc];
    const auto z_sym = rc_decode(f.z_payload, z_tables);
    Tensor z_hat({zh, zw, zc});
    for (std::size_t i = 0; i < z_sym.size(); ++i) z_hat[i] = static_cast<real>(int(z_sym[i]) + kSymbolMin);

    const LatentModel lm = latent_model(z_hat, model, lh, lw);
    if (lm.tables.size() != lh * lw * lc) throw ContractError("latent model size mismatch");
    const auto y_sym = rc_decode(f.y_payload, lm.tables);
    Tensor y_hat({lh, lw, lc});
    for (std::size_t i = 0; i < y_sym.size(); ++i)
        y_hat[i] = static_cast<real>(int(y_sym[i]) + kSymbolMin) + lm.mu[i];

    return clamp01(synthesis_transform(y_hat, model, f.height, f.width));
}

EncodeStats encode_file(const std::string& image_path, Model& model, const std::string& out_path) {
    const Tensor img = image_to_tensor(read_pnm(image_path));
    if (img.dim(2) != 3) throw InputError("encoder expects a colour (P6) image");
    EncodeResult r = encode_image(img, model);
    io::write_file(out_path, r.file);
    return r.stats;
}

void decode_file(const std::string& coded_path, Model& model, const std::string& out_path) {
    const auto bytes = io::read_file(coded_path);
    write_pnm(out_path, tensor_to_image(decode_image(bytes, model)));
}

}  // namespace camc

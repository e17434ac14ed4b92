#include "camc/checkpoint.hpp"

#include <cstring>

#include "binary_io.hpp"
#include "camc/errors.hpp"

namespace camc {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'M', 'C', 'K', 'P', 'T', '\0'};

void write_floats(io::Writer& w, std::span<const real> v) {
    for (real f : v) w.f32(static_cast<float>(f));
}

void read_floats(io::Reader<FormatError>& r, std::span<real> v) {
    for (real& f : v) f = r.f32();
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model) {
    io::Writer w;
    w.raw(std::string(kMagic, sizeof kMagic));
    w.u32(kCheckpointVersion);
    w.str32(model.config().to_text());

    const ParamStore& ps = model.params();
    w.u32(static_cast<std::uint32_t>(ps.size()));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const Tensor& t = ps.value(i);
        w.str16(ps.name(i));
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (std::size_t d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        write_floats(w, t.data());
    }

    const auto& clusters = model.clusters();
    w.u32(static_cast<std::uint32_t>(clusters.size()));
    for (const NamedCluster& c : clusters) {
        w.str16(c.name);
        w.u8(c.initialized ? 1 : 0);
        w.u32(static_cast<std::uint32_t>(c.model.iters));
        w.f32(c.model.ema_decay);
        w.u32(static_cast<std::uint32_t>(c.model.k()));
        w.u32(static_cast<std::uint32_t>(c.model.dim()));
        write_floats(w, c.model.centers.data());
    }
    return std::move(w.buffer());
}

Model deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
    io::Reader<FormatError> r(bytes);
    if (r.raw(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw FormatError("not a checkpoint file");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw FormatError("unsupported checkpoint version " + std::to_string(version));

    ModelConfig config;
    try {
        config = ModelConfig::parse(r.str32());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint config: ") + e.what());
    }
    // Structure and names come from the config; values from the file.
    Model model = Model::create(config, 0);
    ParamStore& ps = model.params();

    const std::uint32_t count = r.u32();
    if (count != ps.size())
        throw FormatError("checkpoint has " + std::to_string(count) + " tensors, config expects " +
                          std::to_string(ps.size()));
    std::vector<bool> seen(ps.size(), false);
    for (std::uint32_t n = 0; n < count; ++n) {
        const std::string name = r.str16();
        const auto idx = ps.find(name);
        if (!idx) throw FormatError("unknown tensor '" + name + "'");
        if (seen[*idx]) throw FormatError("duplicate tensor '" + name + "'");
        seen[*idx] = true;
        Shape shape(r.u8());
        for (auto& d : shape) d = r.u32();
        Tensor& t = ps.value(*idx);
        if (shape != t.shape())
            throw FormatError("tensor '" + name + "' has shape " + shape_str(shape) + ", expected " +
                              shape_str(t.shape()));
        read_floats(r, t.data());
    }

    auto& clusters = model.clusters();
    const std::uint32_t ccount = r.u32();
    if (ccount != clusters.size()) throw FormatError("cluster table size does not match the config");
    for (NamedCluster& c : clusters) {
        const std::string name = r.str16();
        if (name != c.name) throw FormatError("cluster table entry '" + name + "' out of order");
        c.initialized = r.u8() != 0;
        c.model.iters = r.u32();
        c.model.ema_decay = r.f32();
        const std::uint32_t k = r.u32(), d = r.u32();
        if (k != c.model.k() || d != c.model.dim()) throw FormatError("cluster centers of '" + name + "' misshaped");
        read_floats(r, c.model.centers.data());
    }
    if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint");
    return model;
}

void save_checkpoint(const Model& model, const std::string& path) {
    io::write_file(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::string& path) { return deserialize_checkpoint(io::read_file(path)); }

}  // namespace camc

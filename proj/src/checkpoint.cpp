#include "picket/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace picket {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'P', 'C', 'K', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_doubles(std::ostream& out, const double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, p + i, 8);
        write_u64(out, bits);
    }
}

void read_doubles(std::istream& in, double* p, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = read_u64(in);
        std::memcpy(p + i, &bits, 8);
    }
}

void write_container(const std::string& path, const json& header,
                     const std::vector<const Tensor*>& payload) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    write_u32(out, kVersion);
    std::string h = header.dump();
    write_u64(out, h.size());
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const Tensor* t : payload) write_doubles(out, t->data(), t->size());
    if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

struct Container {
    json header;
    std::ifstream in;
};

std::unique_ptr<Container> open_container(const std::string& path, const std::string& kind) {
    auto c = std::make_unique<Container>();
    c->in.open(path, std::ios::binary);
    if (!c->in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    c->in.read(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    std::uint32_t version = read_u32(c->in);
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    std::uint64_t len = read_u64(c->in);
    std::string h(len, '\0');
    c->in.read(h.data(), static_cast<std::streamsize>(len));
    if (!c->in) throw std::runtime_error("truncated checkpoint header: " + path);
    c->header = json::parse(h);
    if (c->header.at("kind").get<std::string>() != kind)
        throw std::runtime_error("checkpoint kind mismatch in " + path);
    return c;
}

json picketnet_header(const PicketNet& net) {
    json j;
    j["config"] = json::parse(net.config().to_json());
    j["schema"] = json::parse(schema_to_json(net.encoder().schema()));
    j["seed"] = net.seed();
    j["step"] = net.params().step();
    json params = json::array();
    net.params().for_each([&](const std::string& name, const Var& v) {
        params.push_back({{"name", name},
                          {"rows", v->value.rows()},
                          {"cols", v->value.cols()}});
    });
    j["params"] = params;
    return j;
}

void collect_params(const PicketNet& net, std::vector<const Tensor*>& payload) {
    net.params().for_each(
        [&](const std::string&, const Var& v) { payload.push_back(&v->value); });
}

std::shared_ptr<PicketNet> picketnet_from(const json& j, std::istream& in) {
    Dataset shim;
    shim.schema = schema_from_json(j.at("schema").dump());
    auto cfg = PicketNetConfig::from_json(j.at("config").dump());
    auto net = std::make_shared<PicketNet>(shim, cfg, j.at("seed").get<std::uint64_t>());

    for (const auto& e : j.at("params")) {
        auto name = e.at("name").get<std::string>();
        auto rows = e.at("rows").get<std::size_t>();
        auto cols = e.at("cols").get<std::size_t>();
        if (!net->params().has(name))
            throw std::runtime_error("checkpoint parameter unknown to the model: " + name);
        Var v = net->params().get(name);
        if (v->value.rows() != rows || v->value.cols() != cols)
            throw std::runtime_error("checkpoint parameter shape mismatch: " + name);
        read_doubles(in, v->value.data(), v->value.size());
    }
    if (!in) throw std::runtime_error("truncated checkpoint payload");
    net->params().set_step(j.at("step").get<long>());
    return net;
}

json tensor_meta(const Tensor& t) { return {{"rows", t.rows()}, {"cols", t.cols()}}; }

Tensor read_tensor(const json& meta, std::istream& in) {
    Tensor t(meta.at("rows").get<std::size_t>(), meta.at("cols").get<std::size_t>());
    read_doubles(in, t.data(), t.size());
    return t;
}

}  // namespace

void save_picketnet(const PicketNet& net, const std::string& path) {
    json header = picketnet_header(net);
    header["kind"] = "picketnet";
    std::vector<const Tensor*> payload;
    collect_params(net, payload);
    write_container(path, header, payload);
}

std::shared_ptr<PicketNet> load_picketnet(const std::string& path) {
    auto c = open_container(path, "picketnet");
    return picketnet_from(c->header, c->in);
}

void save_downstream(const DownstreamModel& model, const std::string& path) {
    json header;
    header["kind"] = "downstream";
    header["model"] = json::parse(model.to_json());
    write_container(path, header, {});
}

DownstreamModel load_downstream(const std::string& path) {
    auto c = open_container(path, "downstream");
    return DownstreamModel::from_json(c->header.at("model").dump());
}

void save_bundle(const GuardBundle& bundle, const std::string& path) {
    if (!bundle.net) throw std::invalid_argument("bundle has no network");
    json header;
    header["kind"] = "bundle";
    header["net"] = picketnet_header(*bundle.net);
    header["model"] = json::parse(bundle.model.to_json());
    header["eval_seed"] = bundle.eval_seed;
    header["threshold"] = bundle.threshold;
    header["variant"] = static_cast<int>(bundle.variant);

    json det;
    det["feature_dim"] = bundle.detectors.feature_dim;
    det["loss_median"] = bundle.detectors.loss_median;
    json per_class = json::array();
    std::vector<const Tensor*> payload;
    collect_params(*bundle.net, payload);
    auto push_detector = [&](const VictimDetector& d) {
        json j;
        j["cls"] = d.cls;
        j["w"] = tensor_meta(d.w);
        j["b"] = tensor_meta(d.b);
        payload.push_back(&d.w);
        payload.push_back(&d.b);
        return j;
    };
    for (const auto& d : bundle.detectors.per_class) per_class.push_back(push_detector(d));
    det["per_class"] = per_class;
    det["unified"] = push_detector(bundle.detectors.unified);
    det["score_based"] = push_detector(bundle.detectors.score_based);
    header["detectors"] = det;
    write_container(path, header, payload);
}

GuardBundle load_bundle(const std::string& path) {
    auto c = open_container(path, "bundle");
    GuardBundle bundle;
    bundle.net = picketnet_from(c->header.at("net"), c->in);
    bundle.model = DownstreamModel::from_json(c->header.at("model").dump());
    bundle.eval_seed = c->header.at("eval_seed").get<std::uint64_t>();
    bundle.threshold = c->header.at("threshold").get<double>();
    bundle.variant = static_cast<DetectorVariant>(c->header.at("variant").get<int>());

    const json& det = c->header.at("detectors");
    bundle.detectors.feature_dim = det.at("feature_dim").get<std::size_t>();
    bundle.detectors.loss_median = det.at("loss_median").get<std::vector<double>>();
    auto pull_detector = [&](const json& j) {
        VictimDetector d;
        d.cls = j.at("cls").get<int>();
        d.w = read_tensor(j.at("w"), c->in);
        d.b = read_tensor(j.at("b"), c->in);
        return d;
    };
    for (const auto& j : det.at("per_class"))
        bundle.detectors.per_class.push_back(pull_detector(j));
    bundle.detectors.unified = pull_detector(det.at("unified"));
    bundle.detectors.score_based = pull_detector(det.at("score_based"));
    if (!c->in) throw std::runtime_error("truncated checkpoint payload");
    return bundle;
}

}  // namespace picket

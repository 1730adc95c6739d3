#include "gemflow/accel/isa.hpp"

#include <charconv>
#include <sstream>

#include "gemflow/errors.hpp"
#include "gemflow/fp16.hpp"

namespace gemflow::accel {

namespace {

const char* space_name(Space s) { return s == Space::Spad ? "spad" : "acc"; }

Space space_from(const std::string& s) {
    if (s == "spad") return Space::Spad;
    if (s == "acc") return Space::Acc;
    throw ValidationError("trace: unknown space '" + s + "'");
}

struct FieldWriter {
    std::ostringstream os;
    void head(const char* name) { os << name; }
    template <typename T>
    void field(const char* key, T value) {
        os << ' ' << key << '=' << value;
    }
};

// "key=value" tokens after the opcode, fixed order enforced on parse.
struct FieldReader {
    std::istringstream is;
    explicit FieldReader(const std::string& line) : is(line) {}

    std::string word() {
        std::string w;
        if (!(is >> w)) throw ValidationError("trace: truncated line");
        return w;
    }
    int64_t value(const char* key) {
        const std::string w = word();
        const std::string k(key);
        if (w.size() < k.size() + 2 || w.compare(0, k.size(), k) != 0 || w[k.size()] != '=')
            throw ValidationError("trace: expected field '" + k + "', got '" + w + "'");
        int64_t v = 0;
        const char* b = w.data() + k.size() + 1;
        auto res = std::from_chars(b, w.data() + w.size(), v);
        if (res.ec != std::errc() || res.ptr != w.data() + w.size())
            throw ValidationError("trace: bad integer in '" + w + "'");
        return v;
    }
    std::string text(const char* key) {
        const std::string w = word();
        const std::string k(key);
        if (w.compare(0, k.size(), k) != 0 || w[k.size()] != '=')
            throw ValidationError("trace: expected field '" + k + "', got '" + w + "'");
        return w.substr(k.size() + 1);
    }
    bool done() {
        std::string w;
        return !(is >> w);
    }
};

void write_local(FieldWriter& w, const char* prefix, const LocalAddr& a) {
    w.os << ' ' << prefix << '=' << space_name(a.space) << ':' << a.row << ':'
         << (a.accumulate ? 1 : 0);
}

LocalAddr read_local(FieldReader& r, const char* key) {
    const std::string v = r.text(key);
    const auto c1 = v.find(':');
    const auto c2 = v.find(':', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
        throw ValidationError("trace: bad local addr '" + v + "'");
    LocalAddr a;
    a.space = space_from(v.substr(0, c1));
    a.row = static_cast<uint32_t>(std::stoul(v.substr(c1 + 1, c2 - c1 - 1)));
    a.accumulate = v.substr(c2 + 1) == "1";
    return a;
}

std::vector<int64_t> split_ints(const std::string& s) {
    std::vector<int64_t> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        const size_t next = s.find(':', pos);
        const std::string part = s.substr(pos, next == std::string::npos ? next : next - pos);
        out.push_back(std::stoll(part));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

}  // namespace

std::string serialize_stream(const InstructionStream& stream) {
    std::ostringstream os;
    for (const auto& ins : stream) {
        FieldWriter w;
        std::visit(
            [&](const auto& i) {
                using T = std::decay_t<decltype(i)>;
                if constexpr (std::is_same_v<T, ConfigEx>) {
                    w.head("config_ex");
                    w.field("mult", i.requant.multiplier_bits());
                    w.field("zp", i.requant.zero_point);
                    if (i.requant.clamp)
                        w.os << " clamp=" << i.requant.clamp->first << ':'
                             << i.requant.clamp->second;
                    else
                        w.os << " clamp=none";
                    w.field("norm", static_cast<int>(i.norm_mode));
                } else if constexpr (std::is_same_v<T, ConfigLd>) {
                    w.head("config_ld");
                    w.field("stride", i.dram_stride);
                    w.field("elem", static_cast<int>(i.elem_bytes));
                    if (i.im2col) {
                        const auto& d = *i.im2col;
                        w.os << " im2col=" << d.in_h << ':' << d.in_w << ':' << d.channels << ':'
                             << d.kh << ':' << d.kw << ':' << d.stride << ':' << d.pad_top << ':'
                             << d.pad_left << ':' << d.out_w << ':' << static_cast<int>(d.pad_value)
                             << ':' << d.m0 << ':' << d.k0;
                    } else {
                        w.os << " im2col=none";
                    }
                } else if constexpr (std::is_same_v<T, ConfigSt>) {
                    w.head("config_st");
                    w.field("stride", i.dram_stride);
                    if (i.pool) {
                        const auto& p = *i.pool;
                        w.os << " pool=" << p.window << ':' << p.stride << ':' << p.pad_top << ':'
                             << p.pad_left << ':' << p.in_h << ':' << p.in_w << ':' << p.out_w
                             << ':' << p.in_pos0 << ':' << p.m0;
                    } else {
                        w.os << " pool=none";
                    }
                } else if constexpr (std::is_same_v<T, Mvin>) {
                    w.head("mvin");
                    w.field("dram", i.dram_addr);
                    write_local(w, "local", i.local);
                    w.field("rows", i.rows);
                    w.field("cols", i.cols);
                    w.field("tr", i.transpose ? 1 : 0);
                    w.field("virt", i.virtual_addr ? 1 : 0);
                } else if constexpr (std::is_same_v<T, Mvout>) {
                    w.head("mvout");
                    write_local(w, "local", i.local);
                    w.field("dram", i.dram_addr);
                    w.field("rows", i.rows);
                    w.field("cols", i.cols);
                    w.field("fp", i.full_precision ? 1 : 0);
                    w.field("virt", i.virtual_addr ? 1 : 0);
                } else if constexpr (std::is_same_v<T, Preload>) {
                    w.head("preload");
                    write_local(w, "b", i.weights);
                    write_local(w, "c", i.dest);
                } else if constexpr (std::is_same_v<T, Compute>) {
                    w.head("compute");
                    write_local(w, "a", i.a);
                    write_local(w, "c", i.dest);
                    w.field("rows", i.rows);
                    w.field("acc", i.accumulate ? 1 : 0);
                } else if constexpr (std::is_same_v<T, Fence>) {
                    w.head("fence");
                }
            },
            ins);
        os << w.os.str() << '\n';
    }
    return os.str();
}

InstructionStream parse_stream(const std::string& text) {
    InstructionStream out;
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        FieldReader r(line);
        const std::string op = r.word();
        if (op == "config_ex") {
            ConfigEx i;
            const uint16_t bits = static_cast<uint16_t>(r.value("mult"));
            const int32_t zp = static_cast<int32_t>(r.value("zp"));
            const std::string clamp = r.text("clamp");
            std::optional<std::pair<int32_t, int32_t>> cl;
            if (clamp != "none") {
                const auto v = split_ints(clamp);
                cl = {static_cast<int32_t>(v.at(0)), static_cast<int32_t>(v.at(1))};
            }
            i.requant = RequantSpec::make(f16_to_f32(bits), zp, cl);
            i.norm_mode = static_cast<uint8_t>(r.value("norm"));
            out.push_back(i);
        } else if (op == "config_ld") {
            ConfigLd i;
            i.dram_stride = r.value("stride");
            i.elem_bytes = static_cast<uint8_t>(r.value("elem"));
            const std::string im = r.text("im2col");
            if (im != "none") {
                const auto v = split_ints(im);
                if (v.size() != 12) throw ValidationError("trace: bad im2col descriptor");
                Im2colDesc d;
                d.in_h = static_cast<uint32_t>(v[0]);
                d.in_w = static_cast<uint32_t>(v[1]);
                d.channels = static_cast<uint32_t>(v[2]);
                d.kh = static_cast<uint16_t>(v[3]);
                d.kw = static_cast<uint16_t>(v[4]);
                d.stride = static_cast<uint16_t>(v[5]);
                d.pad_top = static_cast<int16_t>(v[6]);
                d.pad_left = static_cast<int16_t>(v[7]);
                d.out_w = static_cast<uint32_t>(v[8]);
                d.pad_value = static_cast<int8_t>(v[9]);
                d.m0 = static_cast<uint32_t>(v[10]);
                d.k0 = static_cast<uint32_t>(v[11]);
                i.im2col = d;
            }
            out.push_back(i);
        } else if (op == "config_st") {
            ConfigSt i;
            i.dram_stride = r.value("stride");
            const std::string pool = r.text("pool");
            if (pool != "none") {
                const auto v = split_ints(pool);
                if (v.size() != 9) throw ValidationError("trace: bad pool descriptor");
                PoolDesc p;
                p.window = static_cast<uint16_t>(v[0]);
                p.stride = static_cast<uint16_t>(v[1]);
                p.pad_top = static_cast<int16_t>(v[2]);
                p.pad_left = static_cast<int16_t>(v[3]);
                p.in_h = static_cast<uint32_t>(v[4]);
                p.in_w = static_cast<uint32_t>(v[5]);
                p.out_w = static_cast<uint32_t>(v[6]);
                p.in_pos0 = static_cast<uint32_t>(v[7]);
                p.m0 = static_cast<uint32_t>(v[8]);
                i.pool = p;
            }
            out.push_back(i);
        } else if (op == "mvin") {
            Mvin i;
            i.dram_addr = static_cast<uint64_t>(r.value("dram"));
            i.local = read_local(r, "local");
            i.rows = static_cast<uint16_t>(r.value("rows"));
            i.cols = static_cast<uint16_t>(r.value("cols"));
            i.transpose = r.value("tr") != 0;
            i.virtual_addr = r.value("virt") != 0;
            out.push_back(i);
        } else if (op == "mvout") {
            Mvout i;
            i.local = read_local(r, "local");
            i.dram_addr = static_cast<uint64_t>(r.value("dram"));
            i.rows = static_cast<uint16_t>(r.value("rows"));
            i.cols = static_cast<uint16_t>(r.value("cols"));
            i.full_precision = r.value("fp") != 0;
            i.virtual_addr = r.value("virt") != 0;
            out.push_back(i);
        } else if (op == "preload") {
            Preload i;
            i.weights = read_local(r, "b");
            i.dest = read_local(r, "c");
            out.push_back(i);
        } else if (op == "compute") {
            Compute i;
            i.a = read_local(r, "a");
            i.dest = read_local(r, "c");
            i.rows = static_cast<uint16_t>(r.value("rows"));
            i.accumulate = r.value("acc") != 0;
            out.push_back(i);
        } else if (op == "fence") {
            out.push_back(Fence{});
        } else {
            throw ValidationError("trace: unknown opcode '" + op + "'");
        }
        if (!r.done()) throw ValidationError("trace: trailing fields on '" + op + "' line");
    }
    return out;
}

void validate_stream_features(const AcceleratorConfig& cfg, const InstructionStream& stream) {
    const bool no_transpose = cfg.disabled.count(Feature::Transposition) > 0;
    const bool no_virtual = cfg.disabled.count(Feature::VirtualAddressing) > 0;
    const bool no_norm = cfg.disabled.count(Feature::Normalization) > 0;
    for (size_t idx = 0; idx < stream.size(); ++idx) {
        const auto& ins = stream[idx];
        const std::string where = " (instruction " + std::to_string(idx) + ")";
        if (const auto* m = std::get_if<Mvin>(&ins)) {
            if (m->transpose && no_transpose)
                throw ValidationError("transposition feature is disabled" + where);
            if (m->virtual_addr && no_virtual)
                throw ValidationError("virtual addressing feature is disabled" + where);
        } else if (const auto* m = std::get_if<Mvout>(&ins)) {
            if (m->virtual_addr && no_virtual)
                throw ValidationError("virtual addressing feature is disabled" + where);
        } else if (const auto* c = std::get_if<ConfigEx>(&ins)) {
            if (c->norm_mode != 0 && no_norm)
                throw ValidationError("normalization feature is disabled" + where);
        }
    }
}

}  // namespace gemflow::accel

#include "gemflow/accel/sim.hpp"

#include <algorithm>
#include <cstring>
#include <deque>
#include <limits>

#include "gemflow/dsp_pack.hpp"
#include "gemflow/errors.hpp"
#include "gemflow/types.hpp"

namespace gemflow::accel {

namespace {

enum Ctrl : int { kLoad = 0, kExec = 1, kStore = 2 };

struct RowSpan {
    Space space;
    uint32_t lo = 0, hi = 0;  // [lo, hi)
    bool empty() const { return hi <= lo; }
};

// Scoreboard timestamps per local-memory row.
struct Scoreboard {
    std::vector<uint64_t> write_end, read_end;

    explicit Scoreboard(int64_t rows)
        : write_end(static_cast<size_t>(rows), 0), read_end(static_cast<size_t>(rows), 0) {}

    uint64_t last_write(const RowSpan& s) const {
        uint64_t t = 0;
        for (uint32_t r = s.lo; r < s.hi; ++r) t = std::max(t, write_end[r]);
        return t;
    }
    uint64_t last_any(const RowSpan& s) const {
        uint64_t t = 0;
        for (uint32_t r = s.lo; r < s.hi; ++r)
            t = std::max({t, write_end[r], read_end[r]});
        return t;
    }
    void mark_read(const RowSpan& s, uint64_t end) {
        for (uint32_t r = s.lo; r < s.hi; ++r) read_end[r] = std::max(read_end[r], end);
    }
    void mark_write(const RowSpan& s, uint64_t end) {
        for (uint32_t r = s.lo; r < s.hi; ++r) write_end[r] = std::max(write_end[r], end);
    }
};

struct ActiveAccess {
    int ctrl;
    uint32_t bank_lo, bank_hi;  // spad banks touched, [lo, hi)
    uint64_t start, end;
};

struct BusyUnion {
    uint64_t cur_start = 0, cur_end = 0, accum = 0;
    bool open = false;

    void add(uint64_t s, uint64_t e) {
        if (!open) {
            cur_start = s;
            cur_end = e;
            open = true;
            return;
        }
        if (s <= cur_end) {
            cur_end = std::max(cur_end, e);
        } else {
            accum += cur_end - cur_start;
            cur_start = s;
            cur_end = e;
        }
    }
    uint64_t total() const { return open ? accum + (cur_end - cur_start) : accum; }
};

struct Sim {
    const AcceleratorConfig& cfg;
    const InstructionStream& stream;
    const ExecOptions& opts;
    std::vector<uint8_t> dram;

    std::vector<int8_t> spad;
    std::vector<int32_t> acc;
    std::vector<int8_t> latched;  // dim x dim weight tile
    bool has_preload = false;

    ConfigLd ld_cfg;
    ConfigSt st_cfg;
    RequantSpec ex_requant;  // identity until a ConfigEx arrives

    Scoreboard spad_sb, acc_sb;
    uint64_t ctrl_ready[3] = {0, 0, 0};
    uint64_t exec_last_end = 0;
    uint64_t fence_floor = 0;
    uint64_t max_end = 0;
    BusyUnion busy[3];

    uint64_t bus_free = 0;
    std::deque<uint64_t> mem_completions;  // issue-ordered; ends are non-decreasing
    std::vector<ActiveAccess> active;

    Sim(const AcceleratorConfig& c, const InstructionStream& s, std::vector<uint8_t> d,
        const ExecOptions& o)
        : cfg(c),
          stream(s),
          opts(o),
          dram(std::move(d)),
          spad(static_cast<size_t>(c.spad_rows()) * c.dim, 0),
          acc(static_cast<size_t>(c.acc_rows()) * c.dim, 0),
          latched(static_cast<size_t>(c.dim) * c.dim, 0),
          spad_sb(c.spad_rows()),
          acc_sb(c.acc_rows()) {}

    [[noreturn]] void fail(size_t idx, const std::string& why) const {
        throw SimulationError("instruction " + std::to_string(idx) + ": " + why);
    }

    Scoreboard& board(Space s) { return s == Space::Spad ? spad_sb : acc_sb; }

    int64_t rows_of(Space s) const { return s == Space::Spad ? cfg.spad_rows() : cfg.acc_rows(); }

    void check_span(size_t idx, const RowSpan& s) {
        if (s.hi > rows_of(s.space)) fail(idx, "local address out of range");
    }

    void check_dram(size_t idx, uint64_t lo, uint64_t hi) {
        if (hi < lo || hi > dram.size()) fail(idx, "dram address out of range");
    }

    // ----- classification ---------------------------------------------------

    static int ctrl_of(const Instruction& ins) {
        if (std::holds_alternative<Mvin>(ins) || std::holds_alternative<ConfigLd>(ins))
            return kLoad;
        if (std::holds_alternative<Mvout>(ins) || std::holds_alternative<ConfigSt>(ins))
            return kStore;
        return kExec;
    }

    // ----- hazard spans ------------------------------------------------------

    struct Spans {
        RowSpan reads[2];
        RowSpan writes[1];
        int nreads = 0, nwrites = 0;
    };

    RowSpan pool_read_span(const Mvout& m) const {
        const auto& p = *st_cfg.pool;
        // Conservative coverage of all input positions the windows may touch.
        const uint32_t m_end = p.m0 + m.rows;
        const int64_t oh_lo = p.m0 / p.out_w;
        const int64_t oh_hi = (m_end - 1) / p.out_w;
        int64_t iy_lo = oh_lo * p.stride - p.pad_top;
        int64_t iy_hi = oh_hi * p.stride - p.pad_top + p.window - 1;
        iy_lo = std::clamp<int64_t>(iy_lo, 0, p.in_h - 1);
        iy_hi = std::clamp<int64_t>(iy_hi, 0, p.in_h - 1);
        const int64_t lo = iy_lo * p.in_w - p.in_pos0;
        const int64_t hi = iy_hi * p.in_w + (p.in_w - 1) - p.in_pos0 + 1;
        return RowSpan{m.local.space, m.local.row + static_cast<uint32_t>(std::max<int64_t>(lo, 0)),
                       m.local.row + static_cast<uint32_t>(std::max<int64_t>(hi, 0))};
    }

    Spans spans_of(size_t idx, const Instruction& ins) {
        Spans s;
        if (const auto* m = std::get_if<Mvin>(&ins)) {
            s.writes[s.nwrites++] = RowSpan{m->local.space, m->local.row, m->local.row + m->rows};
        } else if (const auto* m = std::get_if<Mvout>(&ins)) {
            if (st_cfg.pool) {
                s.reads[s.nreads++] = pool_read_span(*m);
            } else {
                s.reads[s.nreads++] = RowSpan{m->local.space, m->local.row, m->local.row + m->rows};
            }
        } else if (const auto* p = std::get_if<Preload>(&ins)) {
            s.reads[s.nreads++] =
                RowSpan{p->weights.space, p->weights.row,
                        p->weights.row + static_cast<uint32_t>(cfg.dim)};
        } else if (const auto* c = std::get_if<Compute>(&ins)) {
            s.reads[s.nreads++] = RowSpan{c->a.space, c->a.row, c->a.row + c->rows};
            s.writes[s.nwrites++] = RowSpan{c->dest.space, c->dest.row, c->dest.row + c->rows};
        }
        for (int i = 0; i < s.nreads; ++i) check_span(idx, s.reads[i]);
        for (int i = 0; i < s.nwrites; ++i) check_span(idx, s.writes[i]);
        return s;
    }

    // ----- timing -------------------------------------------------------

    uint64_t hazard_floor(const Spans& s) {
        uint64_t t = 0;
        for (int i = 0; i < s.nreads; ++i)
            t = std::max(t, board(s.reads[i].space).last_write(s.reads[i]));
        for (int i = 0; i < s.nwrites; ++i)
            t = std::max(t, board(s.writes[i].space).last_any(s.writes[i]));
        return t;
    }

    // One-cycle stall when another controller occupies an overlapping spad
    // bank and the port budget is exhausted.
    uint64_t bank_adjust(int ctrl, const Spans& s, uint64_t start) {
        std::pair<uint32_t, uint32_t> banks{0, 0};
        bool any = false;
        auto widen = [&](const RowSpan& r) {
            if (r.space != Space::Spad || r.empty()) return;
            const uint32_t lo = r.lo / cfg.spad_rows_per_bank();
            const uint32_t hi = (r.hi - 1) / cfg.spad_rows_per_bank() + 1;
            if (!any) {
                banks = {lo, hi};
                any = true;
            } else {
                banks.first = std::min(banks.first, lo);
                banks.second = std::max(banks.second, hi);
            }
        };
        for (int i = 0; i < s.nreads; ++i) widen(s.reads[i]);
        for (int i = 0; i < s.nwrites; ++i) widen(s.writes[i]);
        if (!any) return start;

        int occupants = 0;
        for (const auto& a : active) {
            if (a.ctrl == ctrl) continue;
            if (a.start <= start && start < a.end && a.bank_lo < banks.second &&
                banks.first < a.bank_hi)
                ++occupants;
        }
        return occupants >= cfg.spad_ports ? start + 1 : start;
    }

    void note_active(int ctrl, const Spans& s, uint64_t start, uint64_t end) {
        std::pair<uint32_t, uint32_t> banks{0, 0};
        bool any = false;
        auto widen = [&](const RowSpan& r) {
            if (r.space != Space::Spad || r.empty()) return;
            const uint32_t lo = r.lo / cfg.spad_rows_per_bank();
            const uint32_t hi = (r.hi - 1) / cfg.spad_rows_per_bank() + 1;
            if (!any) {
                banks = {lo, hi};
                any = true;
            } else {
                banks.first = std::min(banks.first, lo);
                banks.second = std::max(banks.second, hi);
            }
        };
        for (int i = 0; i < s.nreads; ++i) widen(s.reads[i]);
        for (int i = 0; i < s.nwrites; ++i) widen(s.writes[i]);
        if (!any) return;
        // Prune entries no future instruction can overlap: starts are bounded
        // below by the controller floors.
        const uint64_t floor =
            std::min({ctrl_ready[0], ctrl_ready[1], ctrl_ready[2], start});
        std::erase_if(active, [&](const ActiveAccess& a) { return a.end <= floor; });
        active.push_back({ctrl, banks.first, banks.second, start, end});
    }

    uint64_t mem_bytes(const Instruction& ins) const {
        if (const auto* m = std::get_if<Mvin>(&ins))
            return static_cast<uint64_t>(m->rows) * m->cols * ld_cfg.elem_bytes;
        if (const auto* m = std::get_if<Mvout>(&ins)) {
            const int eb = m->full_precision ? 4 : 1;
            return static_cast<uint64_t>(m->rows) * m->cols * eb;
        }
        return 0;
    }

    // ----- functional helpers --------------------------------------------

    int8_t* spad_row(uint32_t row) { return spad.data() + static_cast<size_t>(row) * cfg.dim; }
    int32_t* acc_row(uint32_t row) { return acc.data() + static_cast<size_t>(row) * cfg.dim; }

    void do_mvin(size_t idx, const Mvin& m) {
        if (m.rows == 0 || m.cols == 0) fail(idx, "mvin with empty block");
        if (m.rows > cfg.dim) fail(idx, "mvin rows exceed array dimension");
        if (m.cols > cfg.dim) fail(idx, "mvin cols exceed array dimension");

        if (ld_cfg.im2col) {
            if (m.local.space != Space::Spad) fail(idx, "im2col mvin must target the scratchpad");
            if (opts.timing_only) return;
            const auto& d = *ld_cfg.im2col;
            for (uint32_t r = 0; r < m.rows; ++r) {
                int8_t* dst = spad_row(m.local.row + r);
                const uint32_t mpos = d.m0 + r;
                const int64_t oy = mpos / d.out_w;
                const int64_t ox = mpos % d.out_w;
                for (uint32_t c = 0; c < m.cols; ++c) {
                    const uint32_t k = d.k0 + c;
                    const uint32_t ci = k % d.channels;
                    const uint32_t kpos = k / d.channels;
                    const uint32_t kx = kpos % d.kw;
                    const uint32_t ky = kpos / d.kw;
                    const int64_t iy = oy * d.stride - d.pad_top + ky;
                    const int64_t ix = ox * d.stride - d.pad_left + kx;
                    int8_t v = d.pad_value;
                    if (iy >= 0 && iy < d.in_h && ix >= 0 && ix < d.in_w) {
                        const uint64_t addr =
                            m.dram_addr + (static_cast<uint64_t>(iy) * d.in_w + ix) * d.channels +
                            ci;
                        check_dram(idx, addr, addr + 1);
                        v = static_cast<int8_t>(dram[addr]);
                    }
                    dst[c] = v;
                }
                for (uint32_t c = m.cols; c < static_cast<uint32_t>(cfg.dim); ++c) dst[c] = 0;
            }
            return;
        }

        const int eb = ld_cfg.elem_bytes;
        if (eb != 1 && eb != 4) fail(idx, "mvin element width must be 1 or 4 bytes");
        for (uint32_t r = 0; r < m.rows; ++r) {
            const uint64_t src = m.dram_addr + static_cast<uint64_t>(r) * ld_cfg.dram_stride;
            check_dram(idx, src, src + static_cast<uint64_t>(m.cols) * eb);
            if (opts.timing_only) continue;
            if (m.local.space == Space::Spad) {
                if (eb != 1) fail(idx, "scratchpad mvin must use 1-byte elements");
                int8_t* dst = spad_row(m.local.row + r);
                if (m.transpose) {
                    // Transposed load: row r receives column r of the block.
                    for (uint32_t c = 0; c < m.cols; ++c) {
                        const uint64_t a =
                            m.dram_addr + static_cast<uint64_t>(c) * ld_cfg.dram_stride + r;
                        check_dram(idx, a, a + 1);
                        dst[c] = static_cast<int8_t>(dram[a]);
                    }
                } else {
                    std::memcpy(dst, dram.data() + src, m.cols);
                }
                for (uint32_t c = m.cols; c < static_cast<uint32_t>(cfg.dim); ++c) dst[c] = 0;
            } else {
                int32_t* dst = acc_row(m.local.row + r);
                for (uint32_t c = 0; c < m.cols; ++c) {
                    int32_t v;
                    if (eb == 4) {
                        uint32_t u = 0;
                        std::memcpy(&u, dram.data() + src + c * 4, 4);
                        v = static_cast<int32_t>(u);
                    } else {
                        v = static_cast<int8_t>(dram[src + c]);  // widen i8 -> i32
                    }
                    if (m.local.accumulate)
                        dst[c] += v;
                    else
                        dst[c] = v;
                }
                if (!m.local.accumulate)
                    for (uint32_t c = m.cols; c < static_cast<uint32_t>(cfg.dim); ++c) dst[c] = 0;
            }
        }
    }

    void do_preload(size_t idx, const Preload& p) {
        if (p.weights.space != Space::Spad) fail(idx, "preload reads weights from the scratchpad");
        if (p.dest.space != Space::Acc) fail(idx, "preload destination must be the accumulator");
        if (!opts.timing_only)
            for (int k = 0; k < cfg.dim; ++k)
                std::memcpy(latched.data() + static_cast<size_t>(k) * cfg.dim,
                            spad_row(p.weights.row + k), static_cast<size_t>(cfg.dim));
        has_preload = true;
    }

    void do_compute(size_t idx, const Compute& c) {
        if (!has_preload) fail(idx, "compute without a preceding preload");
        if (c.rows == 0 || c.rows > cfg.dim) fail(idx, "compute rows out of range");
        if (c.a.space != Space::Spad) fail(idx, "compute streams activations from the scratchpad");
        if (c.dest.space != Space::Acc) fail(idx, "compute writes the accumulator");
        if (opts.timing_only) return;
        const int64_t sat_hi = (int64_t{1} << (cfg.output_bits - 1)) - 1;
        const int64_t sat_lo = -(int64_t{1} << (cfg.output_bits - 1));
        for (uint32_t r = 0; r < c.rows; ++r) {
            const int8_t* a = spad_row(c.a.row + r);
            int32_t* out = acc_row(c.dest.row + r);
            if (cfg.use_dsp_packing) {
                // Two adjacent output channels share one activation through a
                // packed multiplier; extraction is exact, so this path is
                // bit-identical to the plain one.
                for (int n = 0; n < cfg.dim; n += 2) {
                    int64_t sum0 = 0, sum1 = 0;
                    for (int k = 0; k < cfg.dim; ++k) {
                        const int8_t* wrow = latched.data() + static_cast<size_t>(k) * cfg.dim;
                        const auto [p1, p2] =
                            dsp::packed_mac(dsp::pack(wrow[n], wrow[n + 1]), a[k]);
                        sum0 += p1;
                        sum1 += p2;
                    }
                    if (cfg.saturate_output) {
                        sum0 = std::clamp(sum0, sat_lo, sat_hi);
                        sum1 = std::clamp(sum1, sat_lo, sat_hi);
                    }
                    if (c.accumulate) {
                        out[n] = static_cast<int32_t>(out[n] + sum0);
                        out[n + 1] = static_cast<int32_t>(out[n + 1] + sum1);
                    } else {
                        out[n] = static_cast<int32_t>(sum0);
                        out[n + 1] = static_cast<int32_t>(sum1);
                    }
                }
                continue;
            }
            for (int n = 0; n < cfg.dim; ++n) {
                int64_t sum = 0;
                const int8_t* wcol = latched.data() + n;
                for (int k = 0; k < cfg.dim; ++k)
                    sum += static_cast<int32_t>(a[k]) *
                           static_cast<int32_t>(wcol[static_cast<size_t>(k) * cfg.dim]);
                if (cfg.saturate_output) sum = std::clamp(sum, sat_lo, sat_hi);
                if (c.accumulate)
                    out[n] = static_cast<int32_t>(out[n] + sum);
                else
                    out[n] = static_cast<int32_t>(sum);
            }
        }
    }

    void do_mvout(size_t idx, const Mvout& m) {
        if (m.rows == 0 || m.cols == 0) fail(idx, "mvout with empty block");
        if (m.rows > cfg.dim) fail(idx, "mvout rows exceed array dimension");
        if (m.cols > cfg.dim) fail(idx, "mvout cols exceed array dimension");

        if (st_cfg.pool) {
            do_mvout_pooled(idx, m);
            return;
        }
        for (uint32_t r = 0; r < m.rows; ++r) {
            const uint64_t dst = m.dram_addr + static_cast<uint64_t>(r) * st_cfg.dram_stride;
            const int eb = m.full_precision ? 4 : 1;
            check_dram(idx, dst, dst + static_cast<uint64_t>(m.cols) * eb);
            if (opts.timing_only) continue;
            if (m.local.space == Space::Spad) {
                if (m.full_precision) fail(idx, "full-precision mvout reads the accumulator");
                std::memcpy(dram.data() + dst, spad_row(m.local.row + r), m.cols);
            } else {
                const int32_t* src = acc_row(m.local.row + r);
                if (m.full_precision) {
                    for (uint32_t c = 0; c < m.cols; ++c) {
                        const uint32_t u = static_cast<uint32_t>(src[c]);
                        std::memcpy(dram.data() + dst + c * 4, &u, 4);
                    }
                } else {
                    for (uint32_t c = 0; c < m.cols; ++c)
                        dram[dst + c] = static_cast<uint8_t>(requantize(src[c], ex_requant));
                }
            }
        }
    }

    void do_mvout_pooled(size_t idx, const Mvout& m) {
        const auto& p = *st_cfg.pool;
        if (m.full_precision) fail(idx, "pooled mvout writes i8");
        for (uint32_t r = 0; r < m.rows; ++r) {
            const uint32_t mpos = p.m0 + r;
            const int64_t oh = mpos / p.out_w;
            const int64_t ow = mpos % p.out_w;
            const uint64_t dst = m.dram_addr + static_cast<uint64_t>(r) * st_cfg.dram_stride;
            check_dram(idx, dst, dst + m.cols);
            if (opts.timing_only) continue;
            for (uint32_t c = 0; c < m.cols; ++c) {
                bool seen = false;
                int8_t best = 0;
                for (int ky = 0; ky < p.window; ++ky) {
                    const int64_t iy = oh * p.stride - p.pad_top + ky;
                    if (iy < 0 || iy >= p.in_h) continue;
                    for (int kx = 0; kx < p.window; ++kx) {
                        const int64_t ix = ow * p.stride - p.pad_left + kx;
                        if (ix < 0 || ix >= p.in_w) continue;
                        const int64_t pos = iy * p.in_w + ix - p.in_pos0;
                        const int64_t row = m.local.row + pos;
                        if (pos < 0 || row >= rows_of(m.local.space))
                            fail(idx, "pooled mvout window outside the loaded band");
                        int8_t v;
                        if (m.local.space == Space::Spad)
                            v = spad_row(static_cast<uint32_t>(row))[c];
                        else
                            v = requantize(acc_row(static_cast<uint32_t>(row))[c], ex_requant);
                        if (!seen || v > best) {
                            best = v;
                            seen = true;
                        }
                    }
                }
                if (!seen) fail(idx, "pooled mvout produced an empty window");
                dram[dst + c] = static_cast<uint8_t>(best);
            }
        }
    }

    // ----- main loop ------------------------------------------------------

    // Instructions are processed in program order: every hazard pair has its
    // earlier member already committed when the later one is placed, so the
    // scoreboard sees all relevant producers. Per-controller in-order issue
    // and the serialized bus give the temporal interleaving.
    ExecResult run() {
        for (size_t idx = 0; idx < stream.size(); ++idx) {
            const Instruction& ins = stream[idx];
            if (std::holds_alternative<Fence>(ins)) {
                fence_floor = std::max(fence_floor, max_end);
                continue;
            }
            const int ctrl = ctrl_of(ins);
            const Spans sp = spans_of(idx, ins);
            uint64_t start = std::max({ctrl_ready[ctrl], fence_floor, hazard_floor(sp)});
            if (ctrl == kExec) start = std::max(start, exec_last_end);
            start = bank_adjust(ctrl, sp, start);

            uint64_t end;
            if (std::holds_alternative<ConfigLd>(ins) || std::holds_alternative<ConfigSt>(ins) ||
                std::holds_alternative<ConfigEx>(ins)) {
                end = start + 1;
                ctrl_ready[ctrl] = end;
                if (ctrl == kExec) exec_last_end = end;
                if (const auto* c = std::get_if<ConfigLd>(&ins)) ld_cfg = *c;
                if (const auto* c = std::get_if<ConfigSt>(&ins)) st_cfg = *c;
                if (const auto* c = std::get_if<ConfigEx>(&ins)) {
                    if (c->norm_mode != 0) fail(idx, "normalization is not modeled");
                    ex_requant = c->requant;
                }
            } else if (std::holds_alternative<Mvin>(ins) || std::holds_alternative<Mvout>(ins)) {
                uint64_t issue = start;
                // At most max_inflight transfers overlap their latency phase.
                if (mem_completions.size() >= static_cast<size_t>(cfg.max_inflight))
                    issue = std::max(
                        issue, mem_completions[mem_completions.size() - cfg.max_inflight]);
                const uint64_t bytes = std::max<uint64_t>(mem_bytes(ins), 1);
                const uint64_t bus_time = (bytes + cfg.bus_bytes - 1) / cfg.bus_bytes;
                const uint64_t data_ready = issue + cfg.dram_latency;
                const uint64_t bus_start = std::max(data_ready, bus_free);
                end = bus_start + bus_time;
                bus_free = end;
                mem_completions.push_back(end);
                if (mem_completions.size() > static_cast<size_t>(cfg.max_inflight) * 2)
                    mem_completions.pop_front();
                ctrl_ready[ctrl] = issue + 1;  // pipelined issue, async completion
                start = issue;
                if (const auto* m = std::get_if<Mvin>(&ins))
                    do_mvin(idx, *m);
                else
                    do_mvout(idx, std::get<Mvout>(ins));
            } else if (const auto* p = std::get_if<Preload>(&ins)) {
                end = start + cfg.dim + cfg.spad_read_delay;
                ctrl_ready[ctrl] = end;
                exec_last_end = end;
                do_preload(idx, *p);
            } else if (const auto* c = std::get_if<Compute>(&ins)) {
                end = start + c->rows + 2 * static_cast<uint64_t>(cfg.dim) + cfg.spad_read_delay;
                ctrl_ready[ctrl] = end;
                exec_last_end = end;
                do_compute(idx, *c);
            } else {
                throw SimulationError("unreachable instruction kind");
            }

            for (int i = 0; i < sp.nreads; ++i)
                board(sp.reads[i].space).mark_read(sp.reads[i], end);
            for (int i = 0; i < sp.nwrites; ++i)
                board(sp.writes[i].space).mark_write(sp.writes[i], end);
            note_active(ctrl, sp, start, end);
            busy[ctrl].add(start, end);
            max_end = std::max(max_end, end);
        }

        ExecResult res;
        res.dram = std::move(dram);
        res.cycles.load_busy = busy[kLoad].total();
        res.cycles.exec_busy = busy[kExec].total();
        res.cycles.store_busy = busy[kStore].total();
        res.cycles.total = max_end;
        return res;
    }
};

}  // namespace

ExecResult execute_stream(const AcceleratorConfig& cfg, const InstructionStream& stream,
                          std::vector<uint8_t> dram, const ExecOptions& opts) {
    cfg.validate();
    validate_stream_features(cfg, stream);
    Sim sim(cfg, stream, std::move(dram), opts);
    return sim.run();
}

}  // namespace gemflow::accel

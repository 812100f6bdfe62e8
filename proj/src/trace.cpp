#include "pgl/trace.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <unordered_set>

#include "pgl/errors.hpp"
#include "pgl/rng.hpp"

namespace pgl {

namespace {

constexpr std::array<std::string_view, kOpcodeCount> kOpcodeNames = {
    "arith", "getelementptr", "load", "store", "branch", "call", "phi", "other"};

bool may_define(Opcode op) {
    return op != Opcode::store && op != Opcode::branch && op != Opcode::call;
}

bool must_define(Opcode op) { return may_define(op) && op != Opcode::other; }

bool touches_memory(Opcode op) { return op == Opcode::load || op == Opcode::store; }

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
    Int value{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
    return value;
}

std::optional<RegId> parse_reg(std::string_view s) {
    if (s.size() < 2 || s.front() != 'r') return std::nullopt;
    return parse_int<RegId>(s.substr(1));
}

bool looks_like_regs(std::string_view s) { return s.size() >= 2 && s.front() == 'r'; }

std::vector<RegId> parse_reg_list(std::string_view s, std::size_t line) {
    std::vector<RegId> regs;
    std::size_t pos = 0;
    while (true) {
        auto comma = s.find(',', pos);
        auto piece = s.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos);
        auto reg = parse_reg(piece);
        if (!reg) throw ParseError(line, "bad register '" + std::string(piece) + "'");
        regs.push_back(*reg);
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return regs;
}

std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        std::size_t j = i;
        while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
        if (j > i) out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

std::string describe(const Instruction& ins) {
    return "instruction " + std::to_string(ins.seq) + " (" + std::string(to_string(ins.opcode)) + ")";
}

void check_shape(const Instruction& ins) {
    if (ins.dest && !may_define(ins.opcode))
        throw SemanticError(describe(ins) + " cannot define a register");
    if (!ins.dest && must_define(ins.opcode))
        throw SemanticError(describe(ins) + " requires a destination register");
    if (ins.mem_addr && !touches_memory(ins.opcode))
        throw SemanticError(describe(ins) + " cannot carry a memory address");
    if (touches_memory(ins.opcode) && !ins.mem_addr)
        throw SemanticError(describe(ins) + " requires a memory address");
    if (ins.opcode == Opcode::store && ins.sources.empty())
        throw SemanticError(describe(ins) + " requires at least one source");
    if (ins.operand_bytes == 0) throw SemanticError(describe(ins) + " has zero operand bytes");
}

Instruction parse_instruction(Opcode op, std::span<const std::string_view> fields, std::size_t line) {
    Instruction ins;
    ins.opcode = op;
    ins.latency = default_latency(op);

    std::size_t i = 0;
    int reg_groups = 0;
    bool explicit_no_dest = false;
    while (i < fields.size() && (looks_like_regs(fields[i]) || fields[i] == "-")) {
        auto tok = fields[i++];
        const bool dest_slot = may_define(op) && reg_groups == 0;
        if (tok == "-") {
            if (op != Opcode::other || reg_groups != 0)
                throw ParseError(line, "'-' is only valid as the destination of 'other'");
            explicit_no_dest = true;
            ++reg_groups;
            continue;
        }
        auto regs = parse_reg_list(tok, line);
        if (dest_slot && !explicit_no_dest) {
            if (regs.size() != 1) throw ParseError(line, "destination must be a single register");
            ins.dest = regs.front();
        } else if ((may_define(op) && reg_groups == 1) || (!may_define(op) && reg_groups == 0)) {
            ins.sources = std::move(regs);
        } else if (!may_define(op)) {
            throw ParseError(line, std::string(to_string(op)) + " has no destination register");
        } else {
            throw ParseError(line, "too many register fields");
        }
        ++reg_groups;
    }
    if (i < fields.size() && fields[i].front() == '@') {
        auto addr = parse_int<Address>(fields[i].substr(1));
        if (!addr) throw ParseError(line, "bad address '" + std::string(fields[i]) + "'");
        ins.mem_addr = *addr;
        ++i;
    }
    if (i < fields.size()) {
        auto bytes = parse_int<std::uint32_t>(fields[i]);
        if (!bytes || *bytes == 0) throw ParseError(line, "bad operand bytes '" + std::string(fields[i]) + "'");
        ins.operand_bytes = *bytes;
        ++i;
    }
    if (i < fields.size()) {
        auto lat = parse_int<std::uint32_t>(fields[i]);
        if (!lat) throw ParseError(line, "bad latency '" + std::string(fields[i]) + "'");
        ins.latency = *lat;
        ++i;
    }
    if (i < fields.size()) throw ParseError(line, "unexpected field '" + std::string(fields[i]) + "'");

    try {
        check_shape(ins);
    } catch (const SemanticError& e) {
        throw ParseError(line, e.what());
    }
    return ins;
}

std::string join_regs(const std::vector<RegId>& regs) {
    std::string out;
    for (std::size_t k = 0; k < regs.size(); ++k) {
        if (k) out += ',';
        out += 'r' + std::to_string(regs[k]);
    }
    return out;
}

class TraceBuilder {
public:
    TraceBuilder(std::string name, std::vector<RegId> inputs) {
        trace_.name = std::move(name);
        trace_.inputs = std::move(inputs);
        for (auto r : trace_.inputs) next_reg_ = std::max(next_reg_, r + 1);
    }

    RegId emit(Opcode op, std::vector<RegId> sources, std::optional<Address> addr = std::nullopt,
               std::uint32_t bytes = kDefaultOperandBytes) {
        Instruction ins;
        ins.seq = trace_.instructions.size();
        ins.opcode = op;
        ins.sources = std::move(sources);
        ins.mem_addr = addr;
        ins.operand_bytes = bytes;
        ins.latency = default_latency(op);
        RegId dest = 0;
        if (may_define(op)) {
            dest = next_reg_++;
            ins.dest = dest;
        }
        trace_.instructions.push_back(std::move(ins));
        return dest;
    }

    InstructionTrace take() { return std::move(trace_); }

private:
    InstructionTrace trace_;
    RegId next_reg_ = 0;
};

constexpr Address kLoadRegion = 0x10000;
constexpr Address kStoreRegion = 0x80000;
constexpr Address kScratchRegion = 0x4000;

InstructionTrace make_chain(std::size_t size, std::uint64_t seed) {
    auto rng = make_rng(seed, "trace.sequential_chain");
    TraceBuilder b("chain_" + std::to_string(size) + "_" + std::to_string(seed), {0});
    RegId prev = 0;
    for (std::size_t k = 0; k < size; ++k) {
        const double u = uniform01(rng);
        if (u < 0.6) {
            std::vector<RegId> srcs{prev};
            if (uniform01(rng) < 0.3) srcs.push_back(0);
            prev = b.emit(Opcode::arith, std::move(srcs));
        } else if (u < 0.7) {
            prev = b.emit(Opcode::getelementptr, {prev});
        } else if (u < 0.85) {
            prev = b.emit(Opcode::load, {prev}, kScratchRegion + 8 * uniform_int(rng, 0, 255));
        } else if (u < 0.9) {
            prev = b.emit(Opcode::phi, {prev});
        } else {
            prev = b.emit(Opcode::other, {prev});
        }
    }
    return b.take();
}

InstructionTrace make_parallel_loop(std::size_t iterations, std::uint64_t seed) {
    auto rng = make_rng(seed, "trace.parallel_loop");
    const std::uint32_t elem = uniform01(rng) < 0.5 ? 4 : 8;
    const auto depth = static_cast<std::size_t>(uniform_int(rng, 1, 3));
    TraceBuilder b("loop_" + std::to_string(iterations) + "_" + std::to_string(seed), {0, 1});
    const RegId base = b.emit(Opcode::arith, {0});
    for (std::size_t it = 0; it < iterations; ++it) {
        const auto offset = static_cast<Address>(it) * elem;
        const RegId ptr = b.emit(Opcode::getelementptr, {base});
        RegId value = b.emit(Opcode::load, {ptr}, kLoadRegion + offset, elem);
        for (std::size_t s = 0; s < depth; ++s) value = b.emit(Opcode::arith, {value, 1}, std::nullopt, elem);
        b.emit(Opcode::store, {value, ptr}, kStoreRegion + offset, elem);
    }
    return b.take();
}

InstructionTrace make_mixed(std::size_t size, std::uint64_t seed) {
    auto rng = make_rng(seed, "trace.mixed");
    const std::uint32_t elem = uniform01(rng) < 0.5 ? 4 : 8;
    const auto lanes = static_cast<std::size_t>(uniform_int(rng, 2, std::max<std::int64_t>(2, size / 2)));
    const auto prologue = static_cast<std::size_t>(uniform_int(rng, 1, std::max<std::int64_t>(1, size / 4)));
    const auto depth = static_cast<std::size_t>(uniform_int(rng, 1, 3));
    TraceBuilder b("mixed_" + std::to_string(size) + "_" + std::to_string(seed), {0, 1});

    RegId head = 0;
    for (std::size_t k = 0; k < prologue; ++k) head = b.emit(Opcode::arith, {head, 1});

    std::vector<RegId> results;
    for (std::size_t lane = 0; lane < lanes; ++lane) {
        const RegId ptr = b.emit(Opcode::getelementptr, {head});
        RegId value = b.emit(Opcode::load, {ptr}, kLoadRegion + static_cast<Address>(lane) * elem, elem);
        for (std::size_t s = 0; s < depth; ++s) value = b.emit(Opcode::arith, {value, 1}, std::nullopt, elem);
        results.push_back(value);
    }
    RegId acc = results.front();
    for (std::size_t k = 1; k < results.size(); ++k) acc = b.emit(Opcode::arith, {acc, results[k]}, std::nullopt, elem);
    b.emit(Opcode::store, {acc, head}, kStoreRegion, elem);
    return b.take();
}

}  // namespace

std::string_view to_string(Opcode op) { return kOpcodeNames[static_cast<std::size_t>(op)]; }

std::optional<Opcode> parse_opcode(std::string_view text) {
    for (std::size_t k = 0; k < kOpcodeNames.size(); ++k)
        if (kOpcodeNames[k] == text) return static_cast<Opcode>(k);
    return std::nullopt;
}

std::uint32_t default_latency(Opcode op) {
    switch (op) {
        case Opcode::load:
        case Opcode::store: return 4;
        case Opcode::phi: return 0;
        default: return 1;
    }
}

void validate(const InstructionTrace& trace) {
    std::unordered_set<RegId> defined(trace.inputs.begin(), trace.inputs.end());
    for (std::size_t k = 0; k < trace.instructions.size(); ++k) {
        const auto& ins = trace.instructions[k];
        if (k > 0 && ins.seq <= trace.instructions[k - 1].seq)
            throw SemanticError(describe(ins) + ": seq values must strictly increase");
        check_shape(ins);
        for (auto r : ins.sources)
            if (!defined.count(r))
                throw SemanticError(describe(ins) + " reads r" + std::to_string(r) +
                                    " which is neither defined earlier nor a declared input");
        if (ins.dest) defined.insert(*ins.dest);
    }
}

InstructionTrace parse_trace(std::istream& in) {
    InstructionTrace trace;
    std::unordered_set<RegId> defined;
    bool seen_header = false;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.pop_back();
        auto fields = split_ws(raw);
        if (fields.empty() || fields.front().front() == '#') continue;

        if (fields.front() == "trace") {
            if (seen_header || !trace.instructions.empty())
                throw ParseError(line_no, "header must be the first record");
            if (fields.size() < 2) throw ParseError(line_no, "header needs a trace name");
            trace.name = fields[1] == "-" ? "" : std::string(fields[1]);
            if (fields.size() > 2) {
                if (fields[2] != "inputs") throw ParseError(line_no, "expected 'inputs' after trace name");
                if (fields.size() == 4) trace.inputs = parse_reg_list(fields[3], line_no);
                if (fields.size() > 4) throw ParseError(line_no, "unexpected field after inputs");
            }
            defined.insert(trace.inputs.begin(), trace.inputs.end());
            seen_header = true;
            continue;
        }

        auto op = parse_opcode(fields.front());
        if (!op) throw ParseError(line_no, "unknown opcode '" + std::string(fields.front()) + "'");
        auto ins = parse_instruction(*op, std::span(fields).subspan(1), line_no);
        ins.seq = trace.instructions.size();
        for (auto r : ins.sources)
            if (!defined.count(r))
                throw SemanticError("line " + std::to_string(line_no) + ": r" + std::to_string(r) +
                                    " is neither defined earlier nor a declared input");
        if (ins.dest) defined.insert(*ins.dest);
        trace.instructions.push_back(std::move(ins));
    }
    if (trace.instructions.empty()) throw ParseError(0, "trace has no instructions");
    return trace;
}

InstructionTrace parse_trace(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_trace(in);
}

void render_trace(const InstructionTrace& trace, std::ostream& out) {
    if (!trace.name.empty() || !trace.inputs.empty()) {
        out << "trace " << (trace.name.empty() ? "-" : trace.name);
        if (!trace.inputs.empty()) out << " inputs " << join_regs(trace.inputs);
        out << '\n';
    }
    for (const auto& ins : trace.instructions) {
        out << to_string(ins.opcode);
        if (ins.dest)
            out << " r" << *ins.dest;
        else if (may_define(ins.opcode) && !ins.sources.empty())
            out << " -";
        if (!ins.sources.empty()) out << ' ' << join_regs(ins.sources);
        if (ins.mem_addr) out << " @" << *ins.mem_addr;
        out << ' ' << ins.operand_bytes << ' ' << ins.latency << '\n';
    }
}

std::string render_trace(const InstructionTrace& trace) {
    std::ostringstream out;
    render_trace(trace, out);
    return out.str();
}

std::string_view to_string(Pattern p) {
    switch (p) {
        case Pattern::parallel_loop: return "parallel_loop";
        case Pattern::sequential_chain: return "sequential_chain";
        case Pattern::mixed: return "mixed";
    }
    return "?";
}

std::optional<Pattern> parse_pattern(std::string_view text) {
    for (auto p : {Pattern::parallel_loop, Pattern::sequential_chain, Pattern::mixed})
        if (to_string(p) == text) return p;
    return std::nullopt;
}

InstructionTrace generate_synthetic_trace(Pattern pattern, std::size_t size, std::uint64_t seed) {
    if (size < 4) throw InvalidArgument("synthetic trace size must be at least 4, got " + std::to_string(size));
    switch (pattern) {
        case Pattern::parallel_loop: return make_parallel_loop(size, seed);
        case Pattern::sequential_chain: return make_chain(size, seed);
        case Pattern::mixed: return make_mixed(size, seed);
    }
    throw InvalidArgument("unknown pattern");
}

InstructionTrace join_traces(const InstructionTrace& first, const InstructionTrace& second) {
    std::optional<RegId> seam;
    RegId offset = 0;
    for (auto r : first.inputs) offset = std::max(offset, r + 1);
    for (const auto& ins : first.instructions) {
        if (ins.dest) {
            seam = ins.dest;
            offset = std::max(offset, *ins.dest + 1);
        }
    }
    if (!seam) throw InvalidArgument("join_traces: first trace defines no register");

    InstructionTrace out;
    out.name = first.name + "+" + second.name;
    out.inputs = first.inputs;
    for (auto r : second.inputs) out.inputs.push_back(r + offset);
    out.instructions = first.instructions;

    Address addr_shift = 0;
    for (const auto& ins : first.instructions)
        if (ins.mem_addr) addr_shift = std::max(addr_shift, *ins.mem_addr + 1);
    std::optional<RegId> tail;
    for (auto ins : second.instructions) {
        if (ins.dest) tail = *ins.dest += offset;
        if (ins.mem_addr) *ins.mem_addr += addr_shift;
        for (auto& r : ins.sources) r += offset;
        out.instructions.push_back(std::move(ins));
    }
    if (!tail) throw InvalidArgument("join_traces: second trace defines no register");

    Instruction branch;
    branch.opcode = Opcode::branch;
    branch.sources = {*seam, *tail};
    branch.latency = default_latency(Opcode::branch);
    out.instructions.push_back(branch);
    for (std::size_t k = 0; k < out.instructions.size(); ++k) out.instructions[k].seq = k;
    return out;
}

}  // namespace pgl

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pgl {

enum class Opcode : std::uint8_t { arith, getelementptr, load, store, branch, call, phi, other };

inline constexpr std::size_t kOpcodeCount = 8;

std::string_view to_string(Opcode op);
std::optional<Opcode> parse_opcode(std::string_view text);

/// Abstract cycles charged when the trace omits a latency.
std::uint32_t default_latency(Opcode op);

inline constexpr std::uint32_t kDefaultOperandBytes = 8;

using RegId = std::uint32_t;
using Address = std::int64_t;

struct Instruction {
    std::size_t seq = 0;
    Opcode opcode = Opcode::other;
    std::optional<RegId> dest;
    std::vector<RegId> sources;
    std::optional<Address> mem_addr;
    std::uint32_t operand_bytes = kDefaultOperandBytes;
    std::uint32_t latency = 1;

    bool operator==(const Instruction&) const = default;
};

struct InstructionTrace {
    std::string name;
    std::vector<RegId> inputs;
    std::vector<Instruction> instructions;

    bool operator==(const InstructionTrace&) const = default;
};

/// Checks per-instruction shape rules, seq ordering, and def-before-use.
/// Throws SemanticError naming the offending instruction.
void validate(const InstructionTrace& trace);

/// Parses the line format
///   trace <name> inputs r1,r2,...
///   <opcode> [<dest>|-] [<src1>,<src2>,...] [@<addr>] [<operand_bytes>] [<latency>]
/// Lines starting with '#' and blank lines are ignored. The k-th instruction
/// line gets seq = k.
InstructionTrace parse_trace(std::istream& in);
InstructionTrace parse_trace(std::string_view text);

void render_trace(const InstructionTrace& trace, std::ostream& out);
std::string render_trace(const InstructionTrace& trace);

enum class Pattern { parallel_loop, sequential_chain, mixed };

std::string_view to_string(Pattern p);
std::optional<Pattern> parse_pattern(std::string_view text);

/// Desk-scale program shapes.
///  - parallel_loop: `size` independent iteration bodies, each hanging off a
///    getelementptr fed by one shared base-address node.
///  - sequential_chain: `size` instructions, each consuming its predecessor.
///  - mixed: a serial prologue, a parallel region, and a reduction chain; the
///    split between them is drawn from the seed.
/// Pure in (pattern, size, seed). Throws InvalidArgument when size < 4.
InstructionTrace generate_synthetic_trace(Pattern pattern, std::size_t size, std::uint64_t seed);

/// Appends `second` after `first`, renaming its registers and relocating its
/// memory so the halves never alias, then closes with a branch reading the last
/// value each half defines. The branch counts as part of the second half, so
/// exactly one (control) edge crosses the seam.
InstructionTrace join_traces(const InstructionTrace& first, const InstructionTrace& second);

}  // namespace pgl

#pragma once

// Two-shot arithmetic prompts:
//   "What is X <op> Y? A: Z, What is X <op> Y? A: Z, What is X <op> Y? A:"
// Operands are 0-9 for one-digit tasks and 10-99 for two-digit tasks.
// Subtraction keeps X >= Y and division keeps quotients integral.

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ie/core/error.hpp"
#include "ie/core/random.hpp"
#include "ie/data/corpus.hpp"

namespace ie {

enum class ArithmeticOp { add, sub, mul, div };

struct ArithmeticTask {
    ArithmeticOp op = ArithmeticOp::add;
    int digits = 1; // 1 or 2

    bool operator==(const ArithmeticTask&) const = default;
};

inline const char* op_word(ArithmeticOp op) {
    switch (op) {
    case ArithmeticOp::add: return "plus";
    case ArithmeticOp::sub: return "minus";
    case ArithmeticOp::mul: return "times";
    case ArithmeticOp::div: return "divided by";
    }
    return "?";
}

inline const char* op_name(ArithmeticOp op) {
    switch (op) {
    case ArithmeticOp::add: return "add";
    case ArithmeticOp::sub: return "sub";
    case ArithmeticOp::mul: return "mul";
    case ArithmeticOp::div: return "div";
    }
    return "?";
}

// Names are "<op><digits>", e.g. "add1" or "div2".
inline std::string to_string(ArithmeticTask t) { return std::string(op_name(t.op)) + std::to_string(t.digits); }

inline std::vector<ArithmeticTask> all_arithmetic_tasks() {
    std::vector<ArithmeticTask> out;
    for (int d : {1, 2})
        for (auto op : {ArithmeticOp::add, ArithmeticOp::sub, ArithmeticOp::mul, ArithmeticOp::div}) out.push_back({op, d});
    return out;
}

inline ArithmeticTask parse_arithmetic_task(const std::string& s) {
    for (auto t : all_arithmetic_tasks())
        if (to_string(t) == s) return t;
    throw InvalidArgument("unknown arithmetic task '" + s + "' (expected add1..div2)");
}

struct ArithmeticProblem {
    long x = 0;
    long y = 0;
    long answer = 0;
};

inline ArithmeticProblem draw_problem(ArithmeticTask task, Rng& rng) {
    const long lo = task.digits == 1 ? 0 : 10;
    const long hi = task.digits == 1 ? 9 : 99;
    auto operand = [&] { return lo + static_cast<long>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); };
    ArithmeticProblem p;
    switch (task.op) {
    case ArithmeticOp::add:
        p.x = operand();
        p.y = operand();
        p.answer = p.x + p.y;
        break;
    case ArithmeticOp::sub:
        p.x = operand();
        p.y = operand();
        if (p.x < p.y) std::swap(p.x, p.y);
        p.answer = p.x - p.y;
        break;
    case ArithmeticOp::mul:
        p.x = operand();
        p.y = operand();
        p.answer = p.x * p.y;
        break;
    case ArithmeticOp::div:
        if (task.digits == 1) {
            // Uniform over (divisor, quotient) pairs with a one-digit dividend.
            std::vector<std::pair<long, long>> pairs;
            for (long d = 1; d <= 9; ++d)
                for (long q = 0; d * q <= 9; ++q) pairs.emplace_back(d, q);
            const auto& [d, q] = pairs[rng.below(pairs.size())];
            p.x = d * q;
            p.y = d;
            p.answer = q;
        } else {
            // Uniform two-digit dividend, then a uniform divisor of it.
            p.x = operand();
            std::vector<long> divisors;
            for (long d = 1; d <= p.x; ++d)
                if (p.x % d == 0) divisors.push_back(d);
            p.y = divisors[rng.below(divisors.size())];
            p.answer = p.x / p.y;
        }
        break;
    }
    return p;
}

inline std::string render_question(ArithmeticTask task, const ArithmeticProblem& p) {
    return "What is " + std::to_string(p.x) + " " + op_word(task.op) + " " + std::to_string(p.y) + "? A:";
}

struct ArithmeticPrompt {
    std::string text;
    long expected = 0; // answer to the final question
};

inline ArithmeticPrompt make_prompt(ArithmeticTask task, Rng& rng, std::size_t shots = 2) {
    ArithmeticPrompt out;
    for (std::size_t s = 0; s < shots; ++s) {
        const auto p = draw_problem(task, rng);
        out.text += render_question(task, p) + " " + std::to_string(p.answer) + ", ";
    }
    const auto q = draw_problem(task, rng);
    out.text += render_question(task, q);
    out.expected = q.answer;
    return out;
}

// `count` prompts, each with independently drawn shots and query.
inline std::vector<ArithmeticPrompt> arithmetic_prompts(ArithmeticTask task, std::size_t count, std::uint64_t seed) {
    if (count == 0) throw InvalidArgument("count must be at least 1");
    if (task.digits != 1 && task.digits != 2) throw InvalidArgument("digits must be 1 or 2");
    Rng rng(seed);
    std::vector<ArithmeticPrompt> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(make_prompt(task, rng));
    return out;
}

inline Corpus synth_arithmetic(ArithmeticTask task, std::size_t count, std::uint64_t seed) {
    std::vector<std::string> lines;
    for (auto& p : arithmetic_prompts(task, count, seed)) lines.push_back(std::move(p.text));
    const std::size_t tokens = tokenize(lines.front()).size();
    return Corpus::from_lines({tokens, count, DomainTag::arithmetic, std::nullopt}, "arithmetic-" + to_string(task),
                              seed, Json{{"task", to_string(task)}, {"shots", 2}}, std::move(lines));
}

} // namespace ie

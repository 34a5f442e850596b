#pragma once

#include <sstream>
#include <string>
#include <vector>

namespace fixtures {

// One site of every rewrite category, all frames 32 bytes so per-category
// deltas are uniform. Layout corpus only; not meant to run to completion.
inline std::string overhead_fixture() {
  return
      "\t.text\n"
      "\t.globl\tmain\n"
      "\t.type\tmain, @function\n"
      "\t.type\thelper, @function\n"
      "\t.type\tworker, @function\n"
      "main:\n"
      "\taddi\tsp, sp, -32\n"
      "\tsd\tra, 24(sp)\n"
      "\tsd\tfp, 16(sp)\n"
      "\taddi\tfp, sp, 32\n"
      "\tsd\ts1, 8(sp)\n"
      "\tla\tt2, worker\n"
      "\tjalr\tt2\n"
      "\tcall\tworker\n"
      "\tld\ts1, 8(sp)\n"
      "\tld\tfp, 16(sp)\n"
      "\tld\tra, 24(sp)\n"
      "\taddi\tsp, sp, 32\n"
      "\tla\tt2, helper\n"
      "\tjr\tt2\n"
      "helper:\n"
      "\taddi\tsp, sp, -32\n"
      "\tsd\tra, 24(sp)\n"
      "\tsd\tfp, 16(sp)\n"
      "\taddi\tfp, sp, 32\n"
      "\tnop\n"
      "\tld\tfp, 16(sp)\n"
      "\tld\tra, 24(sp)\n"
      "\taddi\tsp, sp, 32\n"
      "\tret\n"
      "worker:\n"
      "\taddi\tsp, sp, -32\n"
      "\tsd\tra, 24(sp)\n"
      "\tsd\tfp, 16(sp)\n"
      "\taddi\tfp, sp, 32\n"
      "\tli\ta0, 7\n"
      "\tld\tfp, 16(sp)\n"
      "\tld\tra, 24(sp)\n"
      "\taddi\tsp, sp, 32\n"
      "\tret\n";
}

struct BenignFixture {
  std::string name;
  std::string text;
  bool direct_calls = false;  // rewrite redirects direct-call returns, so
                              // such fixtures are hardened with jumps+calls only
  int expected_exit = 0;
};

namespace detail {

inline void prologue(std::ostringstream& s, int n, int k) {
  s << "\taddi\tsp, sp, -" << n << "\n"
    << "\tsd\tra, " << n - 8 << "(sp)\n"
    << "\tsd\tfp, " << n - 16 << "(sp)\n"
    << "\taddi\tfp, sp, " << k << "\n";
}

inline void epilogue(std::ostringstream& s, int n) {
  s << "\tld\tfp, " << n - 16 << "(sp)\n"
    << "\tld\tra, " << n - 8 << "(sp)\n"
    << "\taddi\tsp, sp, " << n << "\n"
    << "\tret\n";
}

inline void exit_with_a0(std::ostringstream& s) {
  s << "\tsd\ta0, 0(s5)\n"     // also land the result in data memory
    << "\tandi\ta0, a0, 255\n"
    << "\tli\ta7, 93\n"
    << "\tecall\n";
}

inline void header(std::ostringstream& s, std::initializer_list<const char*> fns) {
  s << "\t.text\n\t.globl\tmain\n\t.type\tmain, @function\n";
  for (const char* f : fns) s << "\t.type\t" << f << ", @function\n";
}

inline void main_entry(std::ostringstream& s) {
  s << "main:\n";
  prologue(s, 16, 16);
  s << "\tla\ts5, out\n";
}

inline void data_tail(std::ostringstream& s) {
  s << "\t.data\nout:\n\t.dword\t0\nblob:\n\t.byte\t3, 5, 7, 11, 13, 17, 19, 23\n";
}

// Branch-ladder dispatch to one of four labeled cases via `jr`.
inline BenignFixture dispatch(int k) {
  std::ostringstream s;
  header(s, {});
  main_entry(s);
  s << "\tli\tt1, " << k << "\n";
  for (int i = 0; i < 4; ++i)
    s << "\tli\tt2, " << i << "\n"
      << "\tla\tt0, case" << i << "\n"
      << "\tbeq\tt1, t2, go\n";
  s << "\tla\tt0, case0\n"
    << "go:\n"
    << "\tjr\tt0\n";
  for (int i = 0; i < 4; ++i)
    s << "case" << i << ":\n"
      << "\tli\ta0, " << 10 + 3 * i << "\n"
      << "\tj\tjoin\n";
  s << "join:\n";
  exit_with_a0(s);
  data_tail(s);
  return {"dispatch_" + std::to_string(k), s.str(), false, 10 + 3 * k};
}

// Single indirect call into a function with frame n and fp offset k.
inline BenignFixture ind_call(int n, int k) {
  std::ostringstream s;
  header(s, {"leaf"});
  main_entry(s);
  s << "\tli\ta0, " << n + k << "\n"
    << "\tla\tt0, leaf\n"
    << "\tjalr\tt0\n";
  exit_with_a0(s);
  s << "leaf:\n";
  prologue(s, n, k);
  if (n >= 24)
    s << "\tsd\ts1, 0(sp)\n"
      << "\tli\ts1, 5\n"
      << "\tadd\ta0, a0, s1\n"
      << "\tld\ts1, 0(sp)\n";
  else
    s << "\taddi\ta0, a0, 5\n";
  epilogue(s, n);
  data_tail(s);
  return {"ind_call_n" + std::to_string(n) + "_k" + std::to_string(k), s.str(),
          false, (n + k + 5) & 0xff};
}

// main -> outer -> inner, both calls indirect, inner uses the blob.
inline BenignFixture nested(int depth_bonus) {
  std::ostringstream s;
  header(s, {"outer", "inner"});
  main_entry(s);
  s << "\tli\ta0, " << depth_bonus << "\n"
    << "\tla\tt0, outer\n"
    << "\tjalr\tt0\n"
    << "\taddi\ta0, a0, 1\n";
  exit_with_a0(s);
  s << "outer:\n";
  prologue(s, 32, 32);
  s << "\tla\tt1, inner\n"
    << "\tjalr\tt1\n"
    << "\taddi\ta0, a0, 3\n";
  epilogue(s, 32);
  s << "inner:\n";
  prologue(s, 16, 16);
  s << "\tla\tt2, blob\n"
    << "\tlbu\tt3, 2(t2)\n"
    << "\tadd\ta0, a0, t3\n";
  epilogue(s, 16);
  data_tail(s);
  return {"nested_" + std::to_string(depth_bonus), s.str(), false,
          depth_bonus + 7 + 3 + 1};
}

// Callee scratches ra mid-body, then restores it from the stack slot.
inline BenignFixture ra_scratch(int idx) {
  std::ostringstream s;
  header(s, {"leaf"});
  main_entry(s);
  s << "\tli\ta0, " << idx << "\n"
    << "\tla\tt0, leaf\n"
    << "\tjalr\tt0\n";
  exit_with_a0(s);
  s << "leaf:\n";
  prologue(s, 16, 16);
  s << "\tla\tra, blob\n"
    << "\tadd\tra, ra, a0\n"
    << "\tlbu\tt1, 0(ra)\n"
    << "\tadd\ta0, a0, t1\n";
  epilogue(s, 16);
  data_tail(s);
  const int blob[] = {3, 5, 7, 11, 13, 17, 19, 23};
  return {"ra_scratch_" + std::to_string(idx), s.str(), false, idx + blob[idx]};
}

// Early return path with its own epilogue.
inline BenignFixture early_return(int arg) {
  std::ostringstream s;
  header(s, {"leaf"});
  main_entry(s);
  s << "\tli\ta0, " << arg << "\n"
    << "\tla\tt0, leaf\n"
    << "\tjalr\tt0\n";
  exit_with_a0(s);
  s << "leaf:\n";
  prologue(s, 16, 16);
  s << "\tbeq\ta0, zero, early\n"
    << "\taddi\ta0, a0, 100\n";
  epilogue(s, 16);
  s << "early:\n"
    << "\tli\ta0, 42\n";
  epilogue(s, 16);
  data_tail(s);
  return {"early_return_" + std::to_string(arg), s.str(), false,
          arg == 0 ? 42 : arg + 100};
}

// Store-then-sum loop over a data buffer.
inline BenignFixture mem_loop(int count) {
  std::ostringstream s;
  header(s, {});
  main_entry(s);
  s << "\tla\tt0, buf\n"
    << "\tli\tt1, 0\n"
    << "\tli\tt2, " << count << "\n"
    << "store_loop:\n"
    << "\tsb\tt1, 0(t0)\n"
    << "\taddi\tt0, t0, 1\n"
    << "\taddi\tt1, t1, 1\n"
    << "\tblt\tt1, t2, store_loop\n"
    << "\tla\tt0, buf\n"
    << "\tli\tt1, 0\n"
    << "\tli\ta0, 0\n"
    << "sum_loop:\n"
    << "\tlbu\tt3, 0(t0)\n"
    << "\tadd\ta0, a0, t3\n"
    << "\taddi\tt0, t0, 1\n"
    << "\taddi\tt1, t1, 1\n"
    << "\tblt\tt1, t2, sum_loop\n";
  exit_with_a0(s);
  data_tail(s);
  s << "buf:\n\t.zero\t64\n";
  return {"mem_loop_" + std::to_string(count), s.str(), false,
          (count * (count - 1) / 2) & 0xff};
}

// Two plain direct calls; hardened with jumps+calls only.
inline BenignFixture direct(int base) {
  std::ostringstream s;
  header(s, {"leaf"});
  main_entry(s);
  s << "\tli\ta0, " << base << "\n"
    << "\tcall\tleaf\n"
    << "\tcall\tleaf\n";
  exit_with_a0(s);
  s << "leaf:\n";
  prologue(s, 24, 24);
  s << "\taddi\ta0, a0, 9\n";
  epilogue(s, 24);
  data_tail(s);
  return {"direct_" + std::to_string(base), s.str(), true, base + 18};
}

// Dispatch into a case that performs an indirect call.
inline BenignFixture dispatch_call(int k) {
  std::ostringstream s;
  header(s, {"f0", "f1"});
  main_entry(s);
  s << "\tli\ta0, " << k << "\n"
    << "\tla\tt0, pick0\n"
    << "\tbeq\ta0, zero, picked\n"
    << "\tla\tt0, pick1\n"
    << "picked:\n"
    << "\tjr\tt0\n"
    << "pick0:\n"
    << "\tla\tt1, f0\n"
    << "\tj\tdo_call\n"
    << "pick1:\n"
    << "\tla\tt1, f1\n"
    << "do_call:\n"
    << "\tjalr\tt1\n";
  exit_with_a0(s);
  for (int i = 0; i < 2; ++i) {
    s << "f" << i << ":\n";
    prologue(s, 16, 16);
    s << "\taddi\ta0, a0, " << 50 + i * 5 << "\n";
    epilogue(s, 16);
  }
  data_tail(s);
  return {"dispatch_call_" + std::to_string(k), s.str(), false,
          k + (k == 0 ? 50 : 55)};
}

}  // namespace detail

inline std::vector<BenignFixture> benign_corpus() {
  std::vector<BenignFixture> out;
  for (int k = 0; k < 4; ++k) out.push_back(detail::dispatch(k));
  for (int n : {16, 24, 32, 48})
    for (int k : {0, 1})
      out.push_back(detail::ind_call(n, k ? n : n - 16));
  for (int b : {0, 4}) out.push_back(detail::nested(b));
  for (int i : {0, 3}) out.push_back(detail::ra_scratch(i));
  for (int a : {0, 1, 9}) out.push_back(detail::early_return(a));
  for (int c : {8, 24}) out.push_back(detail::mem_loop(c));
  for (int b : {1, 30, 200}) out.push_back(detail::direct(b));
  for (int k : {0, 1}) out.push_back(detail::dispatch_call(k));
  return out;
}

}  // namespace fixtures

#!/usr/bin/env node
// SMT-LIB 2 server on stdin/stdout, backed by the Z3 WebAssembly build
// (npm package `z3-solver`). Commands are evaluated in one persistent
// context, so incremental state (declarations, assertions, push/pop,
// the last check's model and unsat core) carries across commands.
//
// Framing: the client writes complete top-level s-expressions; we evaluate
// every complete command as soon as it arrives and forward Z3's output
// verbatim. Clients that need a response boundary send (echo "...") and
// read until the echoed line appears.

'use strict';

const { init } = require('z3-solver');

// Splits `buf` into complete top-level commands plus an unconsumed tail.
// Tracks s-expression depth, string literals ("" escaping) and ;-comments.
function splitCommands(buf) {
  const out = [];
  let depth = 0;
  let start = 0;
  let inString = false;
  let inComment = false;
  for (let i = 0; i < buf.length; i++) {
    const c = buf[i];
    if (inComment) {
      if (c === '\n') inComment = false;
      continue;
    }
    if (inString) {
      if (c === '"') {
        if (buf[i + 1] === '"') { i++; } else { inString = false; }
      }
      continue;
    }
    if (c === '"') { inString = true; continue; }
    if (c === ';') { inComment = true; continue; }
    if (c === '(') { depth++; continue; }
    if (c === ')') {
      depth--;
      if (depth === 0) {
        out.push(buf.slice(start, i + 1));
        start = i + 1;
      }
      if (depth < 0) { depth = 0; start = i + 1; } // stray ')': drop it
    }
  }
  return { commands: out, rest: buf.slice(start) };
}

async function main() {
  const { Z3 } = await init();
  const ctx = Z3.mk_context(Z3.mk_config());

  let pending = '';
  let queue = Promise.resolve();

  const evalCommands = (cmds) => {
    queue = queue.then(async () => {
      for (const cmd of cmds) {
        let out;
        // eval_smtlib2_string's input plumbing occasionally corrupts a few
        // bytes mid-command (worker handoff race) and the parse fails with
        // "unexpected character". Each call carries exactly one command, so
        // a parse failure means nothing executed and a retry is safe.
        for (let attempt = 0; ; attempt++) {
          try {
            // It also mis-parses input that does not end in a newline, so
            // always terminate the command.
            out = await Z3.eval_smtlib2_string(ctx, cmd.trim() + '\n');
          } catch (e) {
            out = '(error "z3 evaluation failed: ' + String(e).replace(/"/g, "'") + '")\n';
          }
          // "unexpected end of file" can only come from the same race:
          // commands are forwarded only once their parentheses balance.
          if (attempt < 5 && /unexpected character|unexpected end of file/.test(out)) {
            await new Promise((res) => setImmediate(res));
            continue;
          }
          break;
        }
        if (out && out.length > 0) {
          await new Promise((res) => process.stdout.write(out, res));
        }
        if (/^\s*\(\s*exit\s*\)\s*$/.test(cmd)) {
          process.exit(0);
        }
      }
    });
    return queue;
  };

  process.stdin.setEncoding('utf8');
  process.stdin.on('data', (chunk) => {
    pending += chunk;
    const { commands, rest } = splitCommands(pending);
    pending = rest;
    if (commands.length > 0) evalCommands(commands);
  });
  process.stdin.on('end', () => {
    queue.then(() => process.exit(0));
  });
}

main().catch((e) => {
  process.stderr.write('z3server: fatal: ' + String(e) + '\n');
  process.exit(1);
});

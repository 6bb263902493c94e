import init, { detect, roundTrip, score } from "./pkg/pseudogate_demo.js";

const $ = (id) => document.getElementById(id);

function escape(s) {
  return s.replace(/[&<>"]/g, (c) => ({ "&": "&amp;", "<": "&lt;", ">": "&gt;", '"': "&quot;" })[c]);
}

// Spans carry char offsets (code points), not UTF-16 indices.
function highlight(text, spans, cls) {
  const chars = Array.from(text);
  let out = "";
  let at = 0;
  for (const s of spans) {
    out += escape(chars.slice(at, s.start).join(""));
    out += `<mark class="${cls(s)}" title="${s.class}">${escape(chars.slice(s.start, s.end).join(""))}</mark>`;
    at = s.end;
  }
  return out + escape(chars.slice(at).join(""));
}

function guard(target, fn) {
  try {
    fn();
  } catch (e) {
    target.innerHTML = `<p class="err">${escape(String(e))}</p>`;
  }
}

function runDetect() {
  const out = $("detect-out");
  guard(out, () => {
    const text = $("detect-in").value;
    const { spans } = JSON.parse(detect(text));
    const list = spans.map((s) => `${s.class.padEnd(12)} ${s.text}  [${s.start}, ${s.end})`).join("\n");
    out.innerHTML = highlight(text, spans, () => "replaced") + "\n\n" + escape(list || "(no entities)");
  });
}

function runRoundTrip() {
  const out = $("rt-out");
  guard(out, () => {
    const prompt = $("rt-prompt").value;
    const seed = Math.max(0, Math.min(0xffffffff, Number($("rt-seed").value) | 0));
    const r = JSON.parse(roundTrip(prompt, $("rt-response").value, $("rt-strict").checked, seed));
    const rows = r.mapping.pairs
      .map((p) => `<tr><td>${escape(p.original)}</td><td>${p.replaced ? escape(p.pseudonym) : "<em>kept</em>"}</td><td>${p.class}</td><td>${p.relevance}</td></tr>`)
      .join("");
    out.innerHTML = `
      <p>Sent upstream:</p><pre>${escape(r.modified_prompt)}</pre>
      <table><tr><th>original</th><th>pseudonym</th><th>class</th><th>relevance</th></tr>${rows}</table>
      <p>Model response:</p><pre>${escape(r.response)}</pre>
      <p>Restored for the user:</p><pre>${escape(r.restored)}</pre>`;
  });
}

function runScore() {
  const out = $("score-out");
  guard(out, () => {
    const s = JSON.parse(score($("score-cand").value, $("score-ref").value));
    const cells = [
      ["ROUGE-1", s.rouge_1], ["ROUGE-2", s.rouge_2], ["ROUGE-L", s.rouge_l],
      ["BLEU-1", s.bleu[0]], ["BLEU-2", s.bleu[1]], ["BLEU-3", s.bleu[2]], ["BLEU-4", s.bleu[3]],
    ];
    out.innerHTML = "<table>" + cells.map(([k, v]) => `<tr><th>${k}</th><td>${v.toFixed(4)}</td></tr>`).join("") + "</table>";
  });
}

await init();
$("detect-go").onclick = runDetect;
$("rt-go").onclick = runRoundTrip;
$("score-go").onclick = runScore;
runDetect();

import init, { landscapeSummary, classify, gridTree, convLowering } from "./pkg/nn2dt_web.js";

const $ = (id) => document.getElementById(id);

function call(fn, ...args) {
  try {
    return [JSON.parse(fn(...args)), null];
  } catch (e) {
    return [null, String(e.message ?? e)];
  }
}

function showValue(input) {
  input.nextElementSibling.textContent = input.value;
}

function pathText(edges, indent = "") {
  return edges
    .map((e) => {
      const n = e.neuron;
      const configs = e.configs.map((t) => `${t.filler}/${t.role}`).join(", ");
      const head = `${indent}L${n.layer}/F${n.filter}/N${n.neuron}  {${configs}}`;
      return e.subpath ? head + "\n" + pathText(e.subpath, indent + "  ") : head;
    })
    .join("\n");
}

function renderClassify() {
  for (const id of ["alt", "temp", "hum", "theta"]) showValue($(id));
  const [v, err] = call(classify, +$("alt").value, +$("temp").value, +$("hum").value, +$("theta").value, $("scope").value);
  if (err) {
    $("decision").textContent = "";
    $("path").innerHTML = `<span class="err">${err}</span>`;
    return;
  }
  $("decision").textContent = v.label;
  $("path").textContent = pathText(v.path.edges);
}

function treeList(node, configs) {
  const ul = document.createElement("ul");
  ul.className = "tree";
  if (node.leaf) {
    const li = document.createElement("li");
    li.className = "leaf";
    li.textContent = `→ ${node.leaf.label} (${node.leaf.support})`;
    ul.append(li);
  }
  for (const c of node.children) {
    const li = document.createElement("li");
    const n = c.label.neuron;
    const set = (configs[c.label.config_set] ?? []).map((t) => t.filler).join(", ");
    li.textContent = `L${n.layer}/N${n.neuron} {${set}}`;
    if (c.node) li.append(treeList(c.node, configs));
    if (c.leaf) {
      const leaf = document.createElement("span");
      leaf.className = "leaf";
      leaf.textContent = ` → ${c.leaf.label} (${c.leaf.support})`;
      li.append(leaf);
    }
    ul.append(li);
  }
  return ul;
}

function renderGrid() {
  const [v, err] = call(gridTree, +$("theta").value, $("scope").value, 48);
  if (err) {
    $("grid-stats").innerHTML = `<span class="err">${err}</span>`;
    return;
  }
  $("grid-stats").textContent =
    `${v.points} grid points, ${v.replayed} replayed by the tree; ${v.nodes} nodes, ${v.leaves} leaves, ${v.configs} distinct configuration sets.`;
  $("tree").replaceChildren(treeList(v.tree.root, v.tree.config_sets));
  $("dot").textContent = v.dot;
}

function cells(container, rows, cols, label) {
  container.style.gridTemplateColumns = `repeat(${cols}, 26px)`;
  container.replaceChildren();
  const out = [];
  for (let i = 0; i < rows * cols; i++) {
    const d = document.createElement("div");
    d.className = "cell";
    d.textContent = label(i);
    container.append(d);
    out.push(d);
  }
  return out;
}

function renderConv() {
  const n = (id) => +$(id).value;
  const [v, err] = call(convLowering, n("ih"), n("iw"), n("kh"), n("kw"), n("sh"), n("sw"), $("pad").value);
  if (err) {
    $("conv-stats").innerHTML = `<span class="err">${err}</span>`;
    $("conv-in").replaceChildren();
    $("conv-out").replaceChildren();
    return;
  }
  $("conv-stats").textContent =
    `output ${v.output.join("×")}: ${v.edges} edges instead of ${v.dense_edges} in a complete bipartite layer. Hover an output cell.`;
  const inputs = cells($("conv-in"), v.input[0], v.input[1], (i) => i);
  const outputs = cells($("conv-out"), v.output[0], v.output[1], (i) => i);
  outputs.forEach((cell, j) => {
    cell.classList.add("out");
    cell.onmouseenter = () => v.neurons[j].sources.forEach((s) => inputs[s].classList.add("hit"));
    cell.onmouseleave = () => inputs.forEach((c) => c.classList.remove("hit"));
  });
}

await init();
const summary = JSON.parse(landscapeSummary());
document.title = `nn2dt: ${summary.name}`;
for (const id of ["alt", "temp", "hum"]) $(id).oninput = renderClassify;
$("theta").oninput = () => { renderClassify(); renderGrid(); };
$("scope").onchange = () => { renderClassify(); renderGrid(); };
for (const id of ["ih", "iw", "kh", "kw", "sh", "sw", "pad"]) $(id).onchange = renderConv;
renderClassify();
renderGrid();
renderConv();

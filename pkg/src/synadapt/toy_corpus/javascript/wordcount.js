const fs = require("fs");

function countWords(text) {
  const counts = new Map();
  for (const word of text.toLowerCase().split(/\W+/)) {
    if (!word) continue;
    counts.set(word, (counts.get(word) || 0) + 1);
  }
  return counts;
}

function top(counts, n = 3) {
  return [...counts.entries()].sort((a, b) => b[1] - a[1]).slice(0, n);
}

if (require.main === module) {
  const text = process.argv[2] ? fs.readFileSync(process.argv[2], "utf8") : "the cat and the hat";
  console.log(top(countWords(text)));
}

module.exports = { countWords, top };

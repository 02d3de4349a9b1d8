//! Control-flow graph with loop-depth annotations.
//!
//! Blocks are emitted in program order. A `for` body gets its own block one
//! level deeper with a back edge; each `if` arm gets a tagged block. Blocks
//! after a loop or branch are created on demand, so a straight-line program is
//! a single block.
//!
//! Besides the flat block list the graph keeps the statement nesting as a
//! region tree, which the validator walks to apply branch joins and loop
//! fixpoints.

use serde::Serialize;

use super::ast::*;

pub type BlockId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    Tool,
    AiEval,
}

/// One tool call or model evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallSite {
    /// Position in program order among all call sites.
    pub index: usize,
    pub kind: CallKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tool_name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub template: Option<String>,
    #[serde(skip)]
    pub args: CallArgExprs,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bind: Option<String>,
    pub depth: u32,
    pub block: BlockId,
    pub span: Span,
}

impl CallSite {
    /// Tool name, or `ai_eval` for model evaluations.
    pub fn label(&self) -> &str {
        self.tool_name.as_deref().unwrap_or("ai_eval")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BlockItem {
    Call(CallSite),
    Assign { var: String, expr: Expr, span: Span },
    Return { expr: Expr, span: Span },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Then,
    Else,
}

/// Marks a block as belonging to one arm of a conditional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BranchTag {
    pub branch: usize,
    pub arm: Arm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasicBlock {
    pub id: BlockId,
    pub items: Vec<BlockItem>,
    /// Number of enclosing `for` statements.
    pub depth: u32,
    pub branch_tag: Option<BranchTag>,
}

impl BasicBlock {
    pub fn calls(&self) -> impl Iterator<Item = &CallSite> {
        self.items.iter().filter_map(|item| match item {
            BlockItem::Call(c) => Some(c),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Successor {
    Block(BlockId),
    Exit,
}

/// Statement nesting over blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Block(BlockId),
    Loop {
        var: String,
        iter: Expr,
        span: Span,
        body: Vec<Region>,
    },
    Branch {
        id: usize,
        cond: Expr,
        span: Span,
        then: Vec<Region>,
        else_: Vec<Region>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanCfg {
    pub blocks: Vec<BasicBlock>,
    pub edges: Vec<(BlockId, Successor)>,
    pub entry: BlockId,
    pub regions: Vec<Region>,
}

impl PlanCfg {
    /// All call sites in program order.
    pub fn call_sites(&self) -> impl Iterator<Item = &CallSite> {
        let mut sites: Vec<&CallSite> = self.blocks.iter().flat_map(BasicBlock::calls).collect();
        sites.sort_by_key(|c| c.index);
        sites.into_iter()
    }

    pub fn block(&self, id: BlockId) -> &BasicBlock {
        &self.blocks[id]
    }

    pub fn successors(&self, id: BlockId) -> impl Iterator<Item = Successor> + '_ {
        self.edges
            .iter()
            .filter(move |(from, _)| *from == id)
            .map(|(_, to)| *to)
    }
}

struct Builder {
    blocks: Vec<BasicBlock>,
    edges: Vec<(BlockId, Successor)>,
    next_call: usize,
    next_branch: usize,
}

/// Where control is while building a statement sequence.
struct Cursor {
    current: Option<BlockId>,
    /// Blocks whose successor is whatever comes next.
    frontier: Vec<BlockId>,
    depth: u32,
    tag: Option<BranchTag>,
}

impl Builder {
    fn new_block(&mut self, cursor: &mut Cursor, regions: &mut Vec<Region>) -> BlockId {
        let id = self.blocks.len();
        self.blocks.push(BasicBlock {
            id,
            items: Vec::new(),
            depth: cursor.depth,
            branch_tag: cursor.tag,
        });
        for &from in &cursor.frontier {
            self.edges.push((from, Successor::Block(id)));
        }
        cursor.frontier = vec![id];
        cursor.current = Some(id);
        regions.push(Region::Block(id));
        id
    }

    fn current(&mut self, cursor: &mut Cursor, regions: &mut Vec<Region>) -> BlockId {
        match cursor.current {
            Some(id) => id,
            None => self.new_block(cursor, regions),
        }
    }

    fn call(
        &mut self,
        cursor: &mut Cursor,
        regions: &mut Vec<Region>,
        span: Span,
        kind: CallKind,
        name: &str,
        args: &CallArgExprs,
        bind: &Option<String>,
    ) {
        let block = self.current(cursor, regions);
        let site = CallSite {
            index: self.next_call,
            kind,
            tool_name: (kind == CallKind::Tool).then(|| name.to_string()),
            template: (kind == CallKind::AiEval).then(|| name.to_string()),
            args: args.clone(),
            bind: bind.clone(),
            depth: cursor.depth,
            block,
            span,
        };
        self.next_call += 1;
        self.blocks[block].items.push(BlockItem::Call(site));
    }

    fn seq(&mut self, stmts: &[Stmt], cursor: &mut Cursor, regions: &mut Vec<Region>) {
        for stmt in stmts {
            let span = stmt.span;
            match &stmt.kind {
                StmtKind::ToolCall { tool, args, bind } => {
                    self.call(cursor, regions, span, CallKind::Tool, tool, args, bind)
                }
                StmtKind::AiEval {
                    template,
                    args,
                    bind,
                } => self.call(
                    cursor,
                    regions,
                    span,
                    CallKind::AiEval,
                    template,
                    args,
                    bind,
                ),
                StmtKind::Assign { var, expr } => {
                    let b = self.current(cursor, regions);
                    self.blocks[b].items.push(BlockItem::Assign {
                        var: var.clone(),
                        expr: expr.clone(),
                        span,
                    });
                }
                StmtKind::Return(expr) => {
                    let b = self.current(cursor, regions);
                    self.blocks[b].items.push(BlockItem::Return {
                        expr: expr.clone(),
                        span,
                    });
                }
                StmtKind::For { var, iter, body } => {
                    let before = cursor.frontier.clone();
                    let mut inner = Cursor {
                        current: None,
                        frontier: before.clone(),
                        depth: cursor.depth + 1,
                        tag: cursor.tag,
                    };
                    let mut body_regions = Vec::new();
                    let head = self.new_block(&mut inner, &mut body_regions);
                    self.seq(body, &mut inner, &mut body_regions);
                    for &from in &inner.frontier {
                        self.edges.push((from, Successor::Block(head)));
                    }
                    regions.push(Region::Loop {
                        var: var.clone(),
                        iter: iter.clone(),
                        span,
                        body: body_regions,
                    });
                    cursor.frontier = merge(before, inner.frontier);
                    cursor.current = None;
                }
                StmtKind::If {
                    cond,
                    then_body,
                    else_body,
                } => {
                    let id = self.next_branch;
                    self.next_branch += 1;
                    let before = cursor.frontier.clone();
                    let arm = |builder: &mut Builder, which: Arm, body: &[Stmt]| {
                        let mut inner = Cursor {
                            current: None,
                            frontier: before.clone(),
                            depth: cursor.depth,
                            tag: Some(BranchTag {
                                branch: id,
                                arm: which,
                            }),
                        };
                        let mut arm_regions = Vec::new();
                        builder.new_block(&mut inner, &mut arm_regions);
                        builder.seq(body, &mut inner, &mut arm_regions);
                        (arm_regions, inner.frontier)
                    };
                    let (then, then_end) = arm(self, Arm::Then, then_body);
                    let (else_, else_end) = arm(self, Arm::Else, else_body);
                    regions.push(Region::Branch {
                        id,
                        cond: cond.clone(),
                        span,
                        then,
                        else_,
                    });
                    cursor.frontier = merge(then_end, else_end);
                    cursor.current = None;
                }
            }
        }
    }
}

fn merge(mut a: Vec<BlockId>, b: Vec<BlockId>) -> Vec<BlockId> {
    for id in b {
        if !a.contains(&id) {
            a.push(id);
        }
    }
    a
}

/// Build the control-flow graph of a program.
pub fn build_cfg(program: &PlanProgram) -> PlanCfg {
    let mut builder = Builder {
        blocks: Vec::new(),
        edges: Vec::new(),
        next_call: 0,
        next_branch: 0,
    };
    let mut cursor = Cursor {
        current: None,
        frontier: Vec::new(),
        depth: 0,
        tag: None,
    };
    let mut regions = Vec::new();
    let entry = builder.new_block(&mut cursor, &mut regions);
    builder.seq(&program.stmts, &mut cursor, &mut regions);
    for &from in &cursor.frontier {
        builder.edges.push((from, Successor::Exit));
    }
    PlanCfg {
        blocks: builder.blocks,
        edges: builder.edges,
        entry,
        regions,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::planlang::parse_plan;

    /// Enclosing-loop count for every call, by direct recursion over the IR.
    fn depths_by_tree_walk(stmts: &[Stmt], depth: u32, out: &mut Vec<u32>) {
        for s in stmts {
            match &s.kind {
                StmtKind::ToolCall { .. } | StmtKind::AiEval { .. } => out.push(depth),
                StmtKind::For { body, .. } => depths_by_tree_walk(body, depth + 1, out),
                StmtKind::If {
                    then_body,
                    else_body,
                    ..
                } => {
                    depths_by_tree_walk(then_body, depth, out);
                    depths_by_tree_walk(else_body, depth, out);
                }
                _ => {}
            }
        }
    }

    #[test]
    fn straight_line_is_one_block() {
        let p = parse_plan("a = call t1()\nb = call t2()\ncall t3()").unwrap();
        let cfg = build_cfg(&p);
        assert_eq!(cfg.blocks.len(), 1);
        assert_eq!(cfg.blocks[0].depth, 0);
        assert_eq!(cfg.call_sites().count(), 3);
        assert_eq!(cfg.edges, vec![(0, Successor::Exit)]);
    }

    #[test]
    fn loop_gets_body_block_with_back_edge() {
        let p = parse_plan("xs = [1, 2]\nfor x in xs { call t(v=x) }").unwrap();
        let cfg = build_cfg(&p);
        assert_eq!(cfg.blocks.len(), 2);
        assert_eq!(cfg.blocks[0].depth, 0);
        assert_eq!(cfg.blocks[1].depth, 1);
        assert_eq!(cfg.blocks[1].calls().next().unwrap().depth, 1);
        assert!(cfg.edges.contains(&(1, Successor::Block(1))));
        assert!(cfg.edges.contains(&(0, Successor::Exit)));
        assert!(cfg.edges.contains(&(1, Successor::Exit)));
    }

    #[test]
    fn nested_loop_eval_is_depth_two() {
        let p = parse_plan(
            "xs = [[1]]\nfor row in xs {\n  for x in row {\n    r = eval \"judge {x}\"(x=x)\n  }\n}",
        )
        .unwrap();
        let cfg = build_cfg(&p);
        let site = cfg.call_sites().next().unwrap();
        assert_eq!(site.depth, 2);
        assert_eq!(cfg.block(site.block).depth, 2);
    }

    #[test]
    fn branches_are_tagged_and_rejoin() {
        let p = parse_plan("c = true\nif c { call a() } else { call b() }\ncall d()").unwrap();
        let cfg = build_cfg(&p);
        let tags: Vec<_> = cfg
            .blocks
            .iter()
            .map(|b| b.branch_tag.map(|t| t.arm))
            .collect();
        assert_eq!(tags, vec![None, Some(Arm::Then), Some(Arm::Else), None]);
        assert!(cfg.edges.contains(&(1, Successor::Block(3))));
        assert!(cfg.edges.contains(&(2, Successor::Block(3))));
    }

    #[test]
    fn depth_matches_tree_walk() {
        let text = "xs = [1]\ncall a()\nfor x in xs {\n  if x == 1 { call b() }\n  for y in xs { call c() }\n  e = eval \"t\"()\n}\ncall d()";
        let p = parse_plan(text).unwrap();
        let cfg = build_cfg(&p);
        let mut expected = Vec::new();
        depths_by_tree_walk(&p.stmts, 0, &mut expected);
        let got: Vec<u32> = cfg.call_sites().map(|c| c.depth).collect();
        assert_eq!(got, expected);
        for site in cfg.call_sites() {
            assert_eq!(cfg.block(site.block).depth, site.depth);
        }
    }
}

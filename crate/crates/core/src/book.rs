#[doc = include_str!("../../../book/src/introduction.md")]
mod introduction {}
#[doc = include_str!("../../../book/src/problems.md")]
mod problems {}
#[doc = include_str!("../../../book/src/diffusion.md")]
mod diffusion {}
#[doc = include_str!("../../../book/src/baselines.md")]
mod baselines {}
#[doc = include_str!("../../../book/src/evaluation.md")]
mod evaluation {}
#[doc = include_str!("../../../book/src/bounds.md")]
mod bounds {}
#[doc = include_str!("../../../book/src/cli.md")]
mod cli {}

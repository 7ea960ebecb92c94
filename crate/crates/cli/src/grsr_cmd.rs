use memoshare::grsr::{
    check_tiers_with_bound, default_t_max, explain_rejection, infer_tiers, parse_module,
    Definition, GrsrModule,
};

use crate::error::CliError;

pub fn cmd_tier(text: &str, tmax: Option<u32>, only: Option<&str>) -> Result<(), CliError> {
    let module = parse_module(text)?;
    for def in selected(&module, only)? {
        println!("{}", tier_line(def, tmax));
    }
    Ok(())
}

/// One line of `tier` output for `def`.
pub fn tier_line(def: &Definition, tmax: Option<u32>) -> String {
    let bound = tmax.unwrap_or_else(|| default_t_max(&def.expr));
    let (ins, out) = match &def.signature {
        Some(s) => (s.input_algebras(), s.output.algebra.as_str()),
        None => (Vec::new(), ""),
    };
    if let Some(sig) = def.signature.as_ref().and_then(|s| s.tiers()) {
        let shown = sig.render(&ins, out);
        return match check_tiers_with_bound(&def.expr, &sig, bound.max(sig.max_tier())) {
            Ok(_) => format!("{}: accepted at {shown}", def.name),
            Err(e) => format!("{}: rejected at {shown}: {}", def.name, e.0),
        };
    }
    let found = infer_tiers(&def.expr, bound);
    match found.first() {
        Some(least) => format!(
            "{}: accepted at {} ({} signature(s) with tiers <= {bound})",
            def.name,
            least.render(&ins, out),
            found.len()
        ),
        None => {
            let why = explain_rejection(&def.expr)
                .map(|r| r.0)
                .unwrap_or_else(|| format!("no signature with tiers <= {bound}; try a larger --tmax"));
            format!("{}: rejected: {why}", def.name)
        }
    }
}

fn selected<'m>(module: &'m GrsrModule, only: Option<&str>) -> Result<Vec<&'m Definition>, CliError> {
    match only {
        None => Ok(module.defs.iter().collect()),
        Some(name) => module
            .def(name)
            .map(|d| vec![d])
            .ok_or_else(|| CliError::Other(format!("no definition named `{name}`"))),
    }
}

/// The program text for `def` (or the last definition), headed by a comment
/// naming the entry operation.
pub fn cmd_compile(text: &str, def: Option<&str>) -> Result<String, CliError> {
    let module = parse_module(text)?;
    let target = match def {
        Some(_) => selected(&module, def)?[0],
        None => module
            .defs
            .last()
            .ok_or_else(|| CliError::Other("module has no definitions".into()))?,
    };
    let compiled = module
        .compile(&target.name)
        .expect("definition exists")
        .map_err(|e| CliError::Other(e.to_string()))?;
    Ok(format!("# entry: {}\n{}", compiled.entry, compiled.program))
}

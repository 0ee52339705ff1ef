use super::{Action, Direction, Distance, TapTarget};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ActionParseError {
    #[error("UnknownAction: {0:?} is not one of TapButton, Text, LongPress, Swipe, Back, Home, Wait, Stop")]
    UnknownAction(String),
    #[error("ArityError: {0}")]
    ArityError(String),
    #[error("BadEnum: {0}")]
    BadEnum(String),
    #[error("SyntaxError: {0}")]
    SyntaxError(String),
}

impl ActionParseError {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::UnknownAction(_) => "UnknownAction",
            Self::ArityError(_) => "ArityError",
            Self::BadEnum(_) => "BadEnum",
            Self::SyntaxError(_) => "SyntaxError",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Arg {
    Int(String),
    Str(String),
}

impl Arg {
    fn type_name(&self) -> &'static str {
        match self {
            Arg::Int(_) => "integer",
            Arg::Str(_) => "string",
        }
    }
}

fn syntax(msg: impl Into<String>) -> ActionParseError {
    ActionParseError::SyntaxError(msg.into())
}

/// Splits `Name(arg, ...)` into the identifier and its literal arguments.
fn tokenize(text: &str) -> Result<(String, Vec<Arg>), ActionParseError> {
    let s = text.trim();
    let mut chars = s.char_indices().peekable();

    let ident_end = s
        .char_indices()
        .find(|(_, c)| !(c.is_ascii_alphanumeric() || *c == '_'))
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let ident = &s[..ident_end];
    if ident.is_empty() || !ident.starts_with(|c: char| c.is_ascii_alphabetic()) {
        return Err(syntax(format!("expected an action name in {s:?}")));
    }
    while chars.peek().is_some_and(|(i, _)| *i < ident_end) {
        chars.next();
    }

    let skip_ws = |chars: &mut std::iter::Peekable<std::str::CharIndices<'_>>| {
        while chars.peek().is_some_and(|(_, c)| c.is_whitespace()) {
            chars.next();
        }
    };

    skip_ws(&mut chars);
    match chars.next() {
        Some((_, '(')) => {}
        _ => return Err(syntax(format!("expected '(' after {ident:?}"))),
    }

    let mut args = Vec::new();
    skip_ws(&mut chars);
    if chars.peek().is_some_and(|(_, c)| *c == ')') {
        chars.next();
    } else {
        loop {
            skip_ws(&mut chars);
            let arg = match chars.peek().copied() {
                Some((_, q @ ('"' | '\''))) => {
                    chars.next();
                    let mut value = String::new();
                    let mut closed = false;
                    while let Some((_, c)) = chars.next() {
                        if c == '\\' {
                            match chars.next() {
                                Some((_, e)) => value.push(e),
                                None => break,
                            }
                        } else if c == q {
                            closed = true;
                            break;
                        } else {
                            value.push(c);
                        }
                    }
                    if !closed {
                        return Err(syntax("unterminated string literal"));
                    }
                    Arg::Str(value)
                }
                Some((_, c)) if c == '-' || c.is_ascii_digit() => {
                    let mut digits = String::new();
                    digits.push(c);
                    chars.next();
                    while let Some((_, d)) = chars.peek().copied().filter(|(_, d)| d.is_ascii_digit()) {
                        digits.push(d);
                        chars.next();
                    }
                    if digits == "-" {
                        return Err(syntax("'-' without digits"));
                    }
                    Arg::Int(digits)
                }
                Some((_, c)) => return Err(syntax(format!("unexpected {c:?} in argument list"))),
                None => return Err(syntax("unbalanced parentheses")),
            };
            args.push(arg);
            skip_ws(&mut chars);
            match chars.next() {
                Some((_, ',')) => continue,
                Some((_, ')')) => break,
                Some((_, c)) => return Err(syntax(format!("unexpected {c:?} after argument"))),
                None => return Err(syntax("unbalanced parentheses")),
            }
        }
    }

    skip_ws(&mut chars);
    if let Some((i, _)) = chars.next() {
        return Err(syntax(format!("trailing input {:?}", &s[i..])));
    }
    Ok((ident.to_string(), args))
}

fn label_arg(name: &str, arg: &Arg) -> Result<u32, ActionParseError> {
    match arg {
        Arg::Int(digits) => match digits.parse::<u32>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(ActionParseError::ArityError(format!(
                "{name} expects a label >= 1, got {digits}"
            ))),
        },
        other => Err(ActionParseError::ArityError(format!(
            "{name} expects an integer label, got a {}",
            other.type_name()
        ))),
    }
}

fn string_arg<'a>(name: &str, arg: &'a Arg) -> Result<&'a str, ActionParseError> {
    match arg {
        Arg::Str(s) => Ok(s),
        other => Err(ActionParseError::ArityError(format!(
            "{name} expects a string, got a {}",
            other.type_name()
        ))),
    }
}

fn arity(name: &str, args: &[Arg], expected: usize) -> Result<(), ActionParseError> {
    if args.len() == expected {
        Ok(())
    } else {
        Err(ActionParseError::ArityError(format!(
            "{name} takes {expected} argument(s), got {}",
            args.len()
        )))
    }
}

/// Parses the action call grammar. The name is case-insensitive; strings may
/// use single or double quotes; a quoted `TapButton` argument targets text and
/// a bare integer targets a label.
pub fn parse_action(text: &str) -> Result<Action, ActionParseError> {
    let (ident, args) = tokenize(text)?;
    let name = ident.to_ascii_lowercase();
    match name.as_str() {
        "tapbutton" => {
            arity("TapButton", &args, 1)?;
            match &args[0] {
                Arg::Int(_) => Ok(Action::TapButton(TapTarget::Label(label_arg(
                    "TapButton",
                    &args[0],
                )?))),
                Arg::Str(s) if s.is_empty() => Err(ActionParseError::ArityError(
                    "TapButton text target is empty".into(),
                )),
                Arg::Str(s) => Ok(Action::TapButton(TapTarget::Text(s.clone()))),
            }
        }
        "text" => {
            arity("Text", &args, 1)?;
            Ok(Action::Text(string_arg("Text", &args[0])?.to_string()))
        }
        "longpress" => {
            arity("LongPress", &args, 1)?;
            Ok(Action::LongPress(label_arg("LongPress", &args[0])?))
        }
        "swipe" => {
            arity("Swipe", &args, 3)?;
            let label = label_arg("Swipe", &args[0])?;
            let dir = string_arg("Swipe", &args[1])?;
            let dist = string_arg("Swipe", &args[2])?;
            let direction = Direction::from_name(dir).ok_or_else(|| {
                ActionParseError::BadEnum(format!(
                    "direction {dir:?} is not one of up, down, left, right"
                ))
            })?;
            let dist = Distance::from_name(dist).ok_or_else(|| {
                ActionParseError::BadEnum(format!(
                    "distance {dist:?} is not one of short, medium, long"
                ))
            })?;
            Ok(Action::Swipe {
                label,
                direction,
                dist,
            })
        }
        "back" | "home" | "wait" | "stop" => {
            arity(&ident, &args, 0)?;
            Ok(match name.as_str() {
                "back" => Action::Back,
                "home" => Action::Home,
                "wait" => Action::Wait,
                _ => Action::Stop,
            })
        }
        _ => Err(ActionParseError::UnknownAction(ident)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn appendix_examples() {
        assert_eq!(
            parse_action("TapButton(5)").unwrap(),
            Action::TapButton(TapTarget::Label(5))
        );
        assert_eq!(
            parse_action("Swipe(21, \"up\", \"medium\")").unwrap(),
            Action::Swipe {
                label: 21,
                direction: Direction::Up,
                dist: Distance::Medium
            }
        );
        assert_eq!(
            parse_action("TapButton('hat')").unwrap(),
            Action::TapButton(TapTarget::Text("hat".into()))
        );
        assert_eq!(
            parse_action("Text(\"Hello, world!\")").unwrap(),
            Action::Text("Hello, world!".into())
        );
        assert_eq!(parse_action("Stop()").unwrap(), Action::Stop);
    }

    #[test]
    fn case_and_whitespace_tolerance() {
        assert_eq!(
            parse_action("  tapbutton ( 2 )  ").unwrap(),
            Action::TapButton(TapTarget::Label(2))
        );
        assert_eq!(parse_action("WAIT()").unwrap(), Action::Wait);
        assert_eq!(
            parse_action("swipe(3,'DOWN','Long')").unwrap(),
            Action::Swipe {
                label: 3,
                direction: Direction::Down,
                dist: Distance::Long
            }
        );
    }

    #[test]
    fn error_kinds() {
        let kind = |s: &str| parse_action(s).unwrap_err().kind();
        assert_eq!(kind("Swipe(3, \"diagonal\", \"medium\")"), "BadEnum");
        assert_eq!(kind("Swipe(3, \"up\", \"far\")"), "BadEnum");
        assert_eq!(kind("click(2)"), "UnknownAction");
        assert_eq!(kind("TapButton()"), "ArityError");
        assert_eq!(kind("TapButton(0)"), "ArityError");
        assert_eq!(kind("TapButton(-4)"), "ArityError");
        assert_eq!(kind("TapButton(99999999999)"), "ArityError");
        assert_eq!(kind("Text(5)"), "ArityError");
        assert_eq!(kind("Stop(1)"), "ArityError");
        assert_eq!(kind("TapButton('')"), "ArityError");
        assert_eq!(kind("TapButton(5"), "SyntaxError");
        assert_eq!(kind("Text(\"abc)"), "SyntaxError");
        assert_eq!(kind("TapButton(5))"), "SyntaxError");
        assert_eq!(kind("TapButton(up)"), "SyntaxError");
        assert_eq!(kind(""), "SyntaxError");
        assert_eq!(kind("Stop"), "SyntaxError");
        assert_eq!(kind("5(1)"), "SyntaxError");
    }

    #[test]
    fn escapes_inside_strings() {
        assert_eq!(
            parse_action(r#"Text('Don\'t')"#).unwrap(),
            Action::Text("Don't".into())
        );
        assert_eq!(
            parse_action(r#"Text("a\\b")"#).unwrap(),
            Action::Text("a\\b".into())
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn total_on_arbitrary_input(s in ".{0,40}") {
            let _ = parse_action(&s);
        }

        #[test]
        fn total_on_call_shaped_input(s in "[A-Za-z]{1,10}\\([ -~]{0,30}\\)?") {
            let _ = parse_action(&s);
        }
    }
}

//! Street address decomposition and standardization.
//!
//! Components are lowercased, street-type abbreviations are expanded to long
//! form ("st" -> "street"), and numeric street names are encoded as long-form
//! ordinals ("1st" and bare "1" both become "first"). The expansion table
//! covers 1 through 100; anything beyond passes through unchanged.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A decomposed, standardized street address.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address {
    /// Decimal-digit house number, when present.
    pub street_number: Option<String>,
    /// Lowercase standardized street name ("1st" -> "first").
    pub street_name: String,
    /// Lowercase long-form street type ("st" -> "street"); empty if absent.
    pub street_type: String,
    /// Lowercase city.
    pub city: String,
    /// Uppercase two-letter state code.
    pub state: String,
    pub zip: Option<String>,
}

#[derive(Debug, Error, PartialEq)]
pub enum AddressError {
    #[error("UNPARSEABLE: empty or blank address")]
    Unparseable,
    #[error("ADDRESS_NONNUMERIC: street number {0:?} contains non-digit characters")]
    NonNumericNumber(String),
}

impl Address {
    /// Render in the canonical comma-separated form that [`parse_address`]
    /// reproduces exactly: `"123 main street, milwaukee, WI"`.
    pub fn render(&self) -> String {
        let mut street = String::new();
        if let Some(n) = &self.street_number {
            street.push_str(n);
        }
        if !self.street_name.is_empty() {
            if !street.is_empty() {
                street.push(' ');
            }
            street.push_str(&self.street_name);
        }
        if !self.street_type.is_empty() {
            if !street.is_empty() {
                street.push(' ');
            }
            street.push_str(&self.street_type);
        }
        let mut out = street;
        if !self.city.is_empty() {
            if !out.is_empty() {
                out.push_str(", ");
            }
            out.push_str(&self.city);
        }
        if !self.state.is_empty() {
            if !out.is_empty() {
                out.push_str(", ");
            }
            out.push_str(&self.state);
            if let Some(zip) = &self.zip {
                out.push(' ');
                out.push_str(zip);
            }
        }
        out
    }
}

/// Parse a raw address string into standardized components.
///
/// Accepted shapes: `"street"`, `"street, city"`, `"street, city, state"`,
/// `"street, city, state zip"`. Parsing is idempotent: re-parsing the
/// rendered form of a parsed address yields the same components.
pub fn parse_address(raw: &str) -> Result<Address, AddressError> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(AddressError::Unparseable);
    }
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    let street_part = parts[0];
    let city = parts.get(1).copied().unwrap_or("");
    let (state, zip) = match parts.get(2) {
        Some(s) => {
            let mut it = s.split_whitespace();
            (it.next().unwrap_or(""), it.next())
        }
        None => ("", None),
    };
    parse_address_parts(street_part, city, state, zip)
}

/// Parse pre-split address components; the common path for delimited files
/// that carry street, city and state in separate columns.
pub fn parse_address_parts(
    street: &str,
    city: &str,
    state: &str,
    zip: Option<&str>,
) -> Result<Address, AddressError> {
    let (street_number, street_name, street_type) = parse_street(street.trim())?;
    let city = normalize_ws(city.trim()).to_lowercase();
    if street_number.is_none() && street_name.is_empty() && city.is_empty() {
        return Err(AddressError::Unparseable);
    }
    Ok(Address {
        street_number,
        street_name,
        street_type,
        city,
        state: state.trim().to_uppercase(),
        zip: zip.map(|z| z.trim().to_string()).filter(|z| !z.is_empty()),
    })
}

fn parse_street(street: &str) -> Result<(Option<String>, String, String), AddressError> {
    let tokens: Vec<&str> = street.split_whitespace().collect();
    if tokens.is_empty() {
        return Ok((None, String::new(), String::new()));
    }

    let mut idx = 0;
    let street_number = {
        let first = tokens[0];
        if first.chars().all(|c| c.is_ascii_digit()) {
            idx = 1;
            Some(first.to_string())
        } else if first.starts_with(|c: char| c.is_ascii_digit()) && !is_ordinal_form(first) {
            // "12A Main St" has a malformed house number; ordinal-looking
            // tokens like "1st" are street names, not numbers.
            return Err(AddressError::NonNumericNumber(first.to_string()));
        } else {
            None
        }
    };

    let rest = &tokens[idx..];
    if rest.is_empty() {
        return Ok((street_number, String::new(), String::new()));
    }

    let last = rest[rest.len() - 1];
    let (name_tokens, street_type) = match canonical_street_type(last) {
        Some(long) if rest.len() > 1 => (&rest[..rest.len() - 1], long.to_string()),
        // A lone token that looks like a type ("Broadway" case in reverse):
        // treat it as the name so "1st Ave"-style two-token forms still work.
        _ => (rest, String::new()),
    };

    let street_name = match name_tokens {
        [single] => standardize_name_token(single),
        tokens => {
            let mut name = String::with_capacity(street.len());
            for (i, t) in tokens.iter().enumerate() {
                if i > 0 {
                    name.push(' ');
                }
                name.push_str(&standardize_name_token(t));
            }
            name
        }
    };
    Ok((street_number, street_name, street_type))
}

/// Lowercase a street-name token and expand numerics to long-form ordinals.
pub fn standardize_name_token(token: &str) -> String {
    // Ordinal keys start with a digit, so other tokens skip the lookup.
    if token.starts_with(|c: char| c.is_ascii_digit()) {
        let lower = token.to_lowercase();
        if let Some(word) = ordinal_table().get(lower.as_str()) {
            return word.clone();
        }
        return lower;
    }
    token.to_lowercase()
}

/// Digits followed by an ordinal suffix ("2nd", "101st") name a street, not
/// a house number, even past the expansion table's range.
fn is_ordinal_form(token: &str) -> bool {
    let digits = token.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 || digits == token.len() {
        return false;
    }
    let suffix = &token[digits..];
    ["st", "nd", "rd", "th"].iter().any(|s| suffix.eq_ignore_ascii_case(s))
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Long-form ordinal words for 1..=100, keyed by both the bare numeral ("21")
/// and the suffixed ordinal ("21st").
fn ordinal_table() -> &'static BTreeMap<String, String> {
    static TABLE: OnceLock<BTreeMap<String, String>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let ones_ord = [
            "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth",
        ];
        let teens_ord = [
            "tenth",
            "eleventh",
            "twelfth",
            "thirteenth",
            "fourteenth",
            "fifteenth",
            "sixteenth",
            "seventeenth",
            "eighteenth",
            "nineteenth",
        ];
        let tens_card = ["twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"];
        let tens_ord = [
            "twentieth",
            "thirtieth",
            "fortieth",
            "fiftieth",
            "sixtieth",
            "seventieth",
            "eightieth",
            "ninetieth",
        ];

        let word_for = |n: usize| -> String {
            match n {
                1..=9 => ones_ord[n - 1].to_string(),
                10..=19 => teens_ord[n - 10].to_string(),
                20..=99 if n % 10 == 0 => tens_ord[n / 10 - 2].to_string(),
                21..=99 => format!("{}-{}", tens_card[n / 10 - 2], ones_ord[n % 10 - 1]),
                100 => "hundredth".to_string(),
                _ => unreachable!(),
            }
        };
        let suffix_for = |n: usize| -> &'static str {
            match n % 100 {
                11..=13 => "th",
                _ => match n % 10 {
                    1 => "st",
                    2 => "nd",
                    3 => "rd",
                    _ => "th",
                },
            }
        };

        let mut table = BTreeMap::new();
        for n in 1..=100usize {
            let word = word_for(n);
            table.insert(n.to_string(), word.clone());
            table.insert(format!("{n}{}", suffix_for(n)), word);
        }
        table
    })
}

/// Long form for a street-type token, or None if unrecognized.
/// Trailing periods are ignored; matching is case-insensitive.
pub fn canonical_street_type(token: &str) -> Option<&'static str> {
    let key = token.trim_end_matches('.').to_lowercase();
    let long = match key.as_str() {
        "st" | "str" | "street" => "street",
        "ave" | "av" | "aven" | "avenue" => "avenue",
        "rd" | "road" => "road",
        "dr" | "drv" | "drive" => "drive",
        "ln" | "lane" => "lane",
        "blvd" | "boul" | "boulevard" => "boulevard",
        "ct" | "court" => "court",
        "cir" | "circle" => "circle",
        "pl" | "place" => "place",
        "ter" | "terr" | "terrace" => "terrace",
        "hwy" | "highway" => "highway",
        "pkwy" | "pky" | "parkway" => "parkway",
        "sq" | "square" => "square",
        "trl" | "trail" => "trail",
        "aly" | "alley" => "alley",
        "plz" | "plaza" => "plaza",
        "cres" | "crescent" => "crescent",
        "pt" | "point" => "point",
        "way" => "way",
        "row" => "row",
        "walk" => "walk",
        "loop" => "loop",
        "pike" => "pike",
        "run" => "run",
        _ => return None,
    };
    Some(long)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_form() {
        let a = parse_address("123 Main St, Milwaukee, WI").unwrap();
        assert_eq!(a.street_number.as_deref(), Some("123"));
        assert_eq!(a.street_name, "main");
        assert_eq!(a.street_type, "street");
        assert_eq!(a.city, "milwaukee");
        assert_eq!(a.state, "WI");
        assert_eq!(a.zip, None);
    }

    #[test]
    fn ordinal_and_type_expansion() {
        let a = parse_address("1st Ave").unwrap();
        assert_eq!(a.street_number, None);
        assert_eq!(a.street_name, "first");
        assert_eq!(a.street_type, "avenue");
    }

    #[test]
    fn bare_numeric_street_name() {
        let a = parse_address("2000 3 St, Milwaukee, WI").unwrap();
        assert_eq!(a.street_name, "third");
        let b = parse_address("2000 Third St, Milwaukee, WI").unwrap();
        assert_eq!(a.street_name, b.street_name);
    }

    #[test]
    fn compound_ordinals() {
        assert_eq!(standardize_name_token("21st"), "twenty-first");
        assert_eq!(standardize_name_token("42"), "forty-second");
        assert_eq!(standardize_name_token("100th"), "hundredth");
        assert_eq!(standardize_name_token("11th"), "eleventh");
        assert_eq!(standardize_name_token("12th"), "twelfth");
        assert_eq!(standardize_name_token("13th"), "thirteenth");
        // Beyond the table: unchanged.
        assert_eq!(standardize_name_token("101st"), "101st");
        assert_eq!(standardize_name_token("200"), "200");
    }

    #[test]
    fn nonnumeric_house_number_is_rejected() {
        assert_eq!(
            parse_address("12A Main St, Milwaukee, WI"),
            Err(AddressError::NonNumericNumber("12A".into()))
        );
    }

    #[test]
    fn ordinal_streets_beyond_the_table_are_names_not_numbers() {
        let a = parse_address("101st Ave, Queens, NY").unwrap();
        assert_eq!(a.street_number, None);
        assert_eq!(a.street_name, "101st");
        assert_eq!(a.street_type, "avenue");
        let b = parse_address("550 121st St, Queens, NY").unwrap();
        assert_eq!(b.street_number.as_deref(), Some("550"));
        assert_eq!(b.street_name, "121st");
    }

    #[test]
    fn zip_and_state() {
        let a = parse_address("80 Park Rd, Doeville, TX 75001").unwrap();
        assert_eq!(a.state, "TX");
        assert_eq!(a.zip.as_deref(), Some("75001"));
        assert_eq!(a.street_type, "road");
    }

    #[test]
    fn no_type_token() {
        let a = parse_address("123 Broadway, New York, NY").unwrap();
        assert_eq!(a.street_name, "broadway");
        assert_eq!(a.street_type, "");
        assert_eq!(a.city, "new york");
    }

    #[test]
    fn empty_is_unparseable() {
        assert_eq!(parse_address(""), Err(AddressError::Unparseable));
        assert_eq!(parse_address("   "), Err(AddressError::Unparseable));
    }

    #[test]
    fn render_round_trip() {
        let cases = [
            "123 Main St, Milwaukee, WI",
            "1st Ave",
            "2000 Third St, Milwaukee, WI",
            "80 Park Rd, Doeville, TX 75001",
            "123 Broadway, New York, NY",
            "55 N Water Street, Chicago, IL",
        ];
        for raw in cases {
            let once = parse_address(raw).unwrap();
            let again = parse_address(&once.render()).unwrap();
            assert_eq!(once, again, "round trip failed for {raw:?}");
        }
    }
}
